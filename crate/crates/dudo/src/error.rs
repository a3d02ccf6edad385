use std::path::{Path, PathBuf};

use dudo_core::Error as CoreError;

/// Failure of a command, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Io { .. } | CliError::Format { .. } => 3,
        }
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn format(path: impl AsRef<Path>, msg: impl Into<String>) -> Self {
        CliError::Format { path: path.as_ref().to_path_buf(), msg: msg.into() }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NonFinite { .. } | CoreError::NonFiniteLoss { .. } | CoreError::EmptyTape | CoreError::NonScalarLoss(_) => {
                CliError::Runtime(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
