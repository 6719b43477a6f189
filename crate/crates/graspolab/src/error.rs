use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },
    #[error("{0}")]
    Fit(String),
    #[error("{0}")]
    Train(String),
    #[error("{0}")]
    Checkpoint(String),
}

impl HarnessError {
    /// Stable, machine-readable category name.
    pub fn category(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Io { .. } => "io",
            HarnessError::Data { .. } => "data",
            HarnessError::Fit(_) => "fit",
            HarnessError::Train(_) => "train",
            HarnessError::Checkpoint(_) => "checkpoint",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Io { .. } => 3,
            HarnessError::Data { .. } => 4,
            HarnessError::Fit(_) => 5,
            HarnessError::Train(_) => 6,
            HarnessError::Checkpoint(_) => 7,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        HarnessError::Data {
            path: path.into(),
            message: message.into(),
        }
    }
}
