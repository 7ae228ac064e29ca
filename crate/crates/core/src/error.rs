//! Shared error type for the nfc crates.

use thiserror::Error;

/// Errors produced by the signal pipeline, models, and trainers.
#[derive(Debug, Error)]
pub enum NfcError {
    /// A parameter failed validation (window sizes, fractions, dimensions).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Tensor or batch shapes do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Input data violates a contract (unknown labels, missing classes).
    #[error("data error: {0}")]
    Data(String),

    /// A file failed to parse; `location` is a 1-based line or byte offset.
    #[error("parse error in {path} at {location}: {message}")]
    Parse {
        path: String,
        location: String,
        message: String,
    },

    /// Companion values are inconsistent (cache vs model, optimizer vs model).
    #[error("state error: {0}")]
    State(String),

    /// A computation produced a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NfcError>;
