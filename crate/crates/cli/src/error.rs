use std::path::Path;
use std::process::ExitCode;

use thiserror::Error;

/// Failure of a command, carrying the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Missing(String),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Missing(_) => 3,
            CliError::Backend(_) => 4,
            CliError::Other(_) => 1,
        })
    }

    pub fn config(msg: impl std::fmt::Display) -> Self {
        CliError::Config(msg.to_string())
    }

    /// An input artifact that is absent or unreadable.
    pub fn artifact(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Missing(format!("{}: {err}", path.display()))
    }

    /// Failure writing an output.
    pub fn write(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Other(format!("cannot write {}: {err}", path.display()))
    }
}

pub type CliResult<T> = Result<T, CliError>;
