//! The online change-point engine: conjugate Gaussian posterior recursions
//! for the latent image, evaluated in the prior's eigenbasis so each
//! incoming frame costs O(p^2) regardless of how long monitoring runs, and
//! the run-length posterior recursion built on top of them.
//!
//! All densities live in the log domain; sums over hypotheses use
//! log-sum-exp reductions.

mod alarm;
mod engine;
mod error;
mod moments;
mod prior;

pub use alarm::{map_run_length, AlarmDetector, AlarmRule};
pub use engine::{Hazard, RunHypothesis, RunLengthPosterior, RunLengthState};
pub use error::BocdError;
pub use moments::{log_predictive, log_predictive_projected, posterior_moments};
pub use prior::SpectralPrior;
