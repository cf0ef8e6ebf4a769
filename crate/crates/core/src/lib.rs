//! Feature-wise latent additive networks (FLANs).
//!
//! A FLAN encodes every feature group separately into one latent space, sums
//! the per-feature latents and predicts from the sum:
//! `f(x) = psi(sum_i phi_i(x_i))`. Because the latents add, a model can be
//! read three ways without post-hoc machinery: by predicting from single
//! features or partial sums, by latent norms as importances, and by nearest
//! neighbours in the aggregated latent space.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the default `f64`.

pub mod data;
pub mod error;
pub mod interpret;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod train;

pub use error::{Error, Result};
pub use numeric::{Matrix, Rng, Scalar};

pub type Matrix64 = numeric::Matrix<f64>;
pub type Matrix32 = numeric::Matrix<f32>;
pub type Flan64 = model::FlanModel<f64>;
pub type Flan32 = model::FlanModel<f32>;
pub type Bundle64 = model::LatentBundle<f64>;
pub type Dataset64 = data::Dataset<f64>;

pub type Attribution64 = interpret::AttributionVector<f64>;
