//! CLI error type with the documented process exit codes.

use thiserror::Error;

/// Top-level CLI failure; each variant maps to a fixed exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Exit code 1: bad flags or configuration.
    #[error("{0}")]
    Usage(String),
    /// Exit code 2: unreadable or malformed data files, vocabulary mismatch.
    #[error("{0}")]
    Data(String),
    /// Exit code 3: runtime training failure (e.g. non-finite loss).
    #[error("{0}")]
    Training(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Training(_) => 3,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }
}

/// Maps a core error to the CLI taxonomy: training failures keep their own
/// exit code, everything else arising from file content is a data error.
pub fn data_err(context: &str, err: nl2lf_core::Error) -> CliError {
    match err {
        nl2lf_core::Error::Training { .. } => CliError::Training(format!("{context}: {err}")),
        other => CliError::Data(format!("{context}: {other}")),
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
