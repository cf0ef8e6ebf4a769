use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flan_cli::error::EXIT_NUMERIC;
use flan_cli::{cmd_explain, cmd_metrics, cmd_prototypes, cmd_train, selfcheck, CheckpointArgs, Result};

#[derive(Parser)]
#[command(name = "flan", version, about = "Train and interpret feature-wise latent additive networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model per seed; writes train.jsonl, summary.txt and checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Replace the config's seed list with this single seed.
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Attributions, partial predictions, feature effects and examples per sample.
    Explain(Analysis),
    /// Monotonicity, non-sensitivity, diversity and non-representativeness.
    Metrics(Analysis),
    /// K-medoids prototypes of the training split.
    Prototypes(Analysis),
    /// Run the built-in invariant checks.
    Selfcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Analysis {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    allow_hash_mismatch: bool,
    /// Comma-separated row ids.
    #[arg(long, value_delimiter = ',')]
    samples: Option<Vec<usize>>,
}

impl From<Analysis> for CheckpointArgs {
    fn from(a: Analysis) -> Self {
        CheckpointArgs {
            config: a.config,
            checkpoint: a.checkpoint,
            out: a.out,
            allow_hash_mismatch: a.allow_hash_mismatch,
            samples: a.samples,
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    flan_cli::init_threads()?;
    match cli.command {
        Command::Train {
            config,
            out,
            seed_override,
        } => {
            let report = cmd_train(&config, &out, seed_override)?;
            print!("{}", report.summary_text);
        }
        Command::Explain(a) => {
            let records = cmd_explain(&a.into())?;
            println!("{} explanation records", records.len() - 1);
        }
        Command::Metrics(a) => {
            let reports = cmd_metrics(&a.into())?;
            println!("{} metric reports", reports.len());
        }
        Command::Prototypes(a) => {
            let records = cmd_prototypes(&a.into())?;
            println!("{} prototype sets", records.len() - 1);
        }
        Command::Selfcheck { seed } => {
            let checks = selfcheck::run_all(seed);
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().any(|c| !c.passed) {
                return Ok(EXIT_NUMERIC);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
