use thiserror::Error;

/// Exit status of the `flan` binary.
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] flan::Error),
    #[error("invalid configuration at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("checkpoint {0}")]
    Checkpoint(String),
    #[error("checkpoint was trained on task {found}, config describes task {expected} (pass --allow-hash-mismatch to load anyway)")]
    HashMismatch { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// 2 for configuration and contract errors, 3 for numeric failures,
    /// 4 for I/O and malformed files.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e {
                flan::Error::Config { .. }
                | flan::Error::Contract(_)
                | flan::Error::Index { .. }
                | flan::Error::Shape { .. } => EXIT_CONFIG,
                flan::Error::Numeric(_) | flan::Error::UndefinedMetric(_) => EXIT_NUMERIC,
                flan::Error::Io(_) | flan::Error::Csv(_) | flan::Error::Data(_) => EXIT_IO,
            },
            CliError::Config { .. } | CliError::HashMismatch { .. } => EXIT_CONFIG,
            CliError::Checkpoint(_) | CliError::Io(_) | CliError::Json(_) => EXIT_IO,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
