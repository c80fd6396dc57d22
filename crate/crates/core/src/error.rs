use std::path::PathBuf;

use thiserror::Error;

use crate::codec::CodingError;

#[derive(Debug, Error)]
pub enum S2cError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parameter shape error: {0}")]
    ParamShape(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("entropy coding failed: {0}")]
    Coding(#[from] CodingError),
    #[error("incompatible bitstream or checkpoint: {0}")]
    Incompatible(String),
    #[error("context slice requested out of order: expected {expected}, got {requested}")]
    OutOfOrder { expected: String, requested: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("non-finite loss at step {step}{}", snapshot.as_ref().map(|p| format!("; snapshot written to {}", p.display())).unwrap_or_default())]
    NanLoss { step: u64, snapshot: Option<PathBuf> },
    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl S2cError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, S2cError>;
