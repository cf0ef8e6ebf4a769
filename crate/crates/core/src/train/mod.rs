//! Optimizers, learning-rate schedules, losses, the training loop and
//! predictive metrics.

mod config;
mod fit;
mod optim;
mod scores;

pub use config::{lr_at, Optimizer, Schedule, TrainConfig};
pub use fit::{batch_loss_and_grads, evaluate, train, EpochRecord, EvalResult, Evaluation, TrainOutcome};
pub use optim::{adam_step, AdamState};
pub use scores::{accuracy, auc};
