use thiserror::Error;

/// Errors raised by the linear-algebra primitives.
#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("singular operator: {0}")]
    SingularOperator(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}
