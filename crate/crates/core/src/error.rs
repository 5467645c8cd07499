//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid input: {0}")]
    InvalidValue(String),

    #[error("index {index} out of range for space of {n} points")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("empty point set where a nonempty one is required: {0}")]
    EmptySet(String),

    #[error("dyadic construction failed: {0}")]
    Construction(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("ball around point {center} with radius {radius} not covered by any adjacent system")]
    Uncovered { center: usize, radius: f64 },

    #[error("iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
