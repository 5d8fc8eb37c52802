use thiserror::Error;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("fit error: {0}")]
    FitError(String),
}
