//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dataset coverage gap: {0}")]
    CoverageGap(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("training diverged at epoch {epoch}: {message}")]
    Diverged { epoch: usize, message: String },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
