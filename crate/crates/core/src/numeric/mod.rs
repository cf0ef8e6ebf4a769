//! Dense linear algebra, reverse-mode differentiation and seeded randomness.

mod finite_diff;
mod matrix;
mod rng;
mod scalar;
pub mod tape;

pub use finite_diff::finite_diff_gradient;
pub use matrix::{euclidean, Matrix};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tape::{Gradients, NodeId, Tape};
