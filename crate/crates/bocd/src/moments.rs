//! Conjugate posterior moments and predictive densities in the prior's
//! eigenbasis.
//!
//! With `Q0 = P diag(D) P^T` and `n` observations summed into
//! `proj_sum = P^T sum_k x_k`, the posterior of the latent image is
//! Gaussian with spectral precision `D + (n / sigma^2) I` and projected mean
//!
//! ```text
//! m = (D + n/sigma^2 I)^{-1} (proj_sum / sigma^2 + D P^T mu0)
//! ```
//!
//! which is the batch form of the per-frame recursions; all per-hypothesis
//! work is O(p) once the frame has been projected.

use blast_linalg::ImageFrame;
use nalgebra::DVector;

use crate::{BocdError, SpectralPrior};

pub(crate) const LN_2PI: f64 = 1.8378770664093453;

/// Posterior moments after `n` observations: `(projected mean, spectral
/// precision)`. With `n = 0` this is the prior itself.
pub fn posterior_moments(
    prior: &SpectralPrior,
    proj_sum: &DVector<f64>,
    n: usize,
    sigma2: f64,
) -> (DVector<f64>, DVector<f64>) {
    let p = prior.pixels();
    debug_assert_eq!(proj_sum.len(), p);
    let rate = n as f64 / sigma2;
    let mut mean = DVector::zeros(p);
    let mut precision = DVector::zeros(p);
    let d = prior.values();
    let u0 = prior.proj_mean();
    for i in 0..p {
        let prec = d[i] + rate;
        precision[i] = prec;
        mean[i] = (proj_sum[i] / sigma2 + d[i] * u0[i]) / prec;
    }
    (mean, precision)
}

/// Log predictive density of a new frame under the current run's posterior,
/// `log N(vec(x); mu_n, Q_n^{-1} + sigma^2 I)`; `n = 0` gives the marginal
/// `N(mu0, Q0^{-1} + sigma^2 I)`.
pub fn log_predictive(
    prior: &SpectralPrior,
    proj_sum: &DVector<f64>,
    n: usize,
    sigma2: f64,
    x_new: &ImageFrame<f64>,
) -> Result<f64, BocdError> {
    if x_new.rows() != prior.rows() || x_new.cols() != prior.cols() {
        return Err(BocdError::InvalidInput(format!(
            "frame is {}x{}, prior expects {}x{}",
            x_new.rows(),
            x_new.cols(),
            prior.rows(),
            prior.cols()
        )));
    }
    if !x_new.is_finite() {
        return Err(BocdError::InvalidInput(
            "frame contains non-finite pixels".into(),
        ));
    }
    let projected = prior.project(&x_new.to_vector());
    Ok(log_predictive_projected(prior, proj_sum, n, sigma2, &projected))
}

/// [`log_predictive`] for a frame already projected into the eigenbasis;
/// a single allocation-free O(p) pass, used by the engine which evaluates
/// it once per hypothesis per step.
pub fn log_predictive_projected(
    prior: &SpectralPrior,
    proj_sum: &DVector<f64>,
    n: usize,
    sigma2: f64,
    x_projected: &DVector<f64>,
) -> f64 {
    let rate = n as f64 / sigma2;
    let inv_sigma2 = 1.0 / sigma2;
    let d = prior.values().as_slice();
    let u0 = prior.proj_mean().as_slice();
    let c = proj_sum.as_slice();
    let x = x_projected.as_slice();
    let mut acc = 0.0;
    for i in 0..d.len() {
        let prec = d[i] + rate;
        let mean = (c[i] * inv_sigma2 + d[i] * u0[i]) / prec;
        let lambda = 1.0 / prec + sigma2;
        let y = x[i] - mean;
        acc += LN_2PI + lambda.ln() + y * y / lambda;
    }
    -0.5 * acc
}
