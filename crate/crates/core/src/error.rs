use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, NafError>;

#[derive(Debug, Error)]
pub enum NafError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("non-numeric cell {value:?} at row {row}, column {column}")]
    NonNumeric {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("target column {0:?} not found")]
    MissingTarget(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("dimension mismatch: expected {expected}, got {actual}{}", location.map(|r| format!(" (row {r})")).unwrap_or_default())]
    Dimension {
        expected: usize,
        actual: usize,
        location: Option<usize>,
    },

    #[error("dataset too small: {0}")]
    TooSmall(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("empty key list passed to attention scoring")]
    EmptyKeys,

    #[error(
        "layer widths do not chain: layer {layer} expects {expected} inputs, previous layer emits {actual}"
    )]
    WidthMismatch {
        layer: usize,
        expected: usize,
        actual: usize,
    },

    #[error("target vector is constant; R^2 is undefined")]
    ConstantTarget,

    #[error("non-finite loss at epoch {epoch}; learning rate {learning_rate} is likely too high")]
    NonFiniteLoss { epoch: usize, learning_rate: f64 },

    #[error("model file: {0}")]
    ModelFormat(String),
}
