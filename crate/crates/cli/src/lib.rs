//! Run configuration, checkpoints and the `train`, `explain`, `metrics`,
//! `prototypes` and `selfcheck` commands of the `flan` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod selfcheck;

pub use checkpoint::Checkpoint;
pub use commands::{cmd_explain, cmd_metrics, cmd_prototypes, cmd_train, CheckpointArgs, SeedRun, TrainReport};
pub use config::{LoadedConfig, RunConfig};
pub use error::{CliError, Result};

/// Sizes the global worker pool from `FLAN_THREADS` when set.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("FLAN_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| CliError::config("FLAN_THREADS", format!("`{v}` is not a thread count")))?;
    if n == 0 {
        return Err(CliError::config("FLAN_THREADS", "must be at least 1"));
    }
    // a pool built earlier in the same process is kept
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
