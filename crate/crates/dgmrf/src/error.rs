use thiserror::Error;

#[derive(Debug, Error)]
pub enum DgmrfError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("elicitation failed: {0}")]
    ElicitationFailed(String),

    #[error(transparent)]
    Linalg(#[from] blast_linalg::LinalgError),
}
