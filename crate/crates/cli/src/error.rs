use thiserror::Error;

/// Process exit codes are part of the harness contract:
/// 0 success, 2 input error, 3 elicitation failure, 4 numeric failure.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("elicitation failed: {0}")]
    Elicitation(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Io { .. } => 2,
            CliError::Elicitation(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().display().to_string(), source }
    }
}

impl From<blast_linalg::LinalgError> for CliError {
    fn from(e: blast_linalg::LinalgError) -> Self {
        use blast_linalg::LinalgError::*;
        match e {
            InvalidInput(_) | DimensionMismatch { .. } => CliError::Input(e.to_string()),
            SingularOperator(_) | Numeric(_) => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<blast_dgmrf::DgmrfError> for CliError {
    fn from(e: blast_dgmrf::DgmrfError) -> Self {
        use blast_dgmrf::DgmrfError::*;
        match e {
            InvalidInput(_) => CliError::Input(e.to_string()),
            ElicitationFailed(_) => CliError::Elicitation(e.to_string()),
            Numeric(_) => CliError::Numeric(e.to_string()),
            Linalg(inner) => inner.into(),
        }
    }
}

impl From<blast_bocd::BocdError> for CliError {
    fn from(e: blast_bocd::BocdError) -> Self {
        use blast_bocd::BocdError::*;
        match e {
            InvalidInput(_) => CliError::Input(e.to_string()),
            Numeric(_) => CliError::Numeric(e.to_string()),
            Linalg(inner) => inner.into(),
        }
    }
}

impl From<blast_baselines::BaselineError> for CliError {
    fn from(e: blast_baselines::BaselineError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<blast_simgen::SimgenError> for CliError {
    fn from(e: blast_simgen::SimgenError) -> Self {
        use blast_simgen::SimgenError::*;
        match e {
            InvalidInput(_) => CliError::Input(e.to_string()),
            Numeric(_) => CliError::Numeric(e.to_string()),
            Linalg(inner) => inner.into(),
        }
    }
}
