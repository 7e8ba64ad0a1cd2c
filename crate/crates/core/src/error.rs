use std::path::PathBuf;

use thiserror::Error;

use crate::agents::ProviderError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("required file missing: {0}")]
    MissingFile(String),

    #[error("malformed {file}: {message}")]
    Parse { file: String, message: String },

    #[error("calendar inconsistency: {0}")]
    Calendar(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("provider failure: {0}")]
    Provider(#[from] ProviderError),

    #[error("run store: {0}")]
    Store(String),

    #[error("configuration differs from the stored run in: {}", .keys.join(", "))]
    ConfigMismatch { keys: Vec<String> },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(file: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            message: message.into(),
        }
    }
}
