use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("dataset not found or unreadable: {path}: {source}")]
    MissingDataset { path: PathBuf, source: std::io::Error },
    #[error("{source_name}: line {line}: {reason}")]
    Parse { source_name: String, line: usize, reason: String },
    #[error("{0}: no data rows")]
    EmptyDataset(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] nng_core::Error),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingDataset { .. } => 2,
            _ => 1,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }
}

impl From<nng_core::linalg::LinalgError> for CliError {
    fn from(e: nng_core::linalg::LinalgError) -> Self {
        CliError::Core(e.into())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
