//! The deep GMRF image prior: an L-layer convolutional construction whose
//! composed linear maps induce a Gaussian Markov random field on the image.
//!
//! This crate covers the offline half of the monitoring pipeline:
//! variational elicitation of the prior from reference images (ELBO
//! objective with reparameterized gradients, optimized by Adam), plus the
//! unstructured diagonal prior used as an ablation.

mod adam;
mod diagonal;
mod elbo;
mod elicit;
mod error;
mod params;

pub use adam::{AdamConfig, AdamOptimizer};
pub use diagonal::{fit_diagonal_prior, DiagonalPrior};
pub use elbo::{elbo, elbo_with_grad, forward_map, log_det_theta};
pub use elicit::{
    elicit_prior_from_init,
    elicit_prior, initialize_parameters, ElicitedPrior, EarlyStop, FitReport, OptimizerConfig,
    Provenance,
};
pub use error::DgmrfError;
pub use params::{DgmrfParams, ParamLayout, VariationalParams};
