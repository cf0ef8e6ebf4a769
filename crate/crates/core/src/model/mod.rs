//! The additive latent architecture and its partial-evaluation entry points.

mod flan;
mod mlp;
mod partition;

pub use flan::{
    EncoderSpec, Encoders, FlanModel, LatentBundle, OutputKind, PredictorSpec, Sharing, TapeForward,
};
pub use mlp::{Activation, Dense, Mlp};
pub use partition::{FeaturePartition, PartitionKind};
