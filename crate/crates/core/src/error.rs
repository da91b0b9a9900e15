use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("label {label} out of range for {num_classes} classes (row {row})")]
    LabelOutOfRange { row: usize, label: usize, num_classes: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("feature store source mismatch: expected {expected}, found {found}")]
    SourceMismatch { expected: &'static str, found: &'static str },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("no nonzero differences")]
    NoNonzeroDifferences,

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
