//! CLI error type with the exit-code contract: 0 success, 1 for
//! validation or parse failures, 2 for I/O failures.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Parse {
        path: PathBuf,
        source: fusebox_core::detections::ParseError,
    },
    #[error("{0}")]
    Validation(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{failed} of {total} images failed to transform")]
    PartialFailure { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Parse { .. } | CliError::Validation(_) => 1,
            CliError::Io { .. } | CliError::PartialFailure { .. } => 2,
        }
    }
}
