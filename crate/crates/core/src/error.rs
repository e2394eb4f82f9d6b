//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A mini-batch or training set carries no annotated voxels.
    #[error("empty annotation: {0}")]
    EmptyAnnotation(String),

    /// A query strategy was asked to select from a pool with no eligible volumes.
    #[error("exhausted pool: no eligible volumes remain")]
    ExhaustedPool,

    /// A metric is undefined for the given inputs (e.g. empty reference mask).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// A statistical test has too few usable samples.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A file could not be parsed; the message names the offending field.
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
