use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimgenError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Linalg(#[from] blast_linalg::LinalgError),
}
