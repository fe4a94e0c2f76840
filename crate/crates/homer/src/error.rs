//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input data; `line` is 1-based within the offending file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("dimension mismatch: vector has {left}, expected {right}")]
    DimensionMismatch { left: usize, right: usize },

    /// Model and dataset disagree (vocabulary hash, feature count, ...).
    #[error("model/data mismatch: {0}")]
    Mismatch(String),

    #[error("unsupported model format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("malformed model file: {0}")]
    Model(String),

    #[error("cannot train a model without instances")]
    NoInstances,

    #[error("model has not been trained")]
    Untrained,

    #[error("{0}")]
    Other(String),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse { line, message: message.into() }
    }
}
