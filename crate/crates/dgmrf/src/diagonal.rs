//! The unstructured ablation prior: independent Gaussians per pixel,
//! `x_i ~ N(mean_i, var_i + gamma^2)`, fitted by exact per-pixel marginal
//! likelihood maximization with a shared noise variance.

use blast_linalg::ImageFrame;
use nalgebra::DVector;

use crate::DgmrfError;

const GAMMA2_FLOOR: f64 = 1e-6;

/// Diagonal Gaussian prior with shared observation-noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalPrior {
    mean: DVector<f64>,
    var_diag: DVector<f64>,
    noise_variance: f64,
    rows: usize,
    cols: usize,
}

impl DiagonalPrior {
    pub fn from_parts(
        rows: usize,
        cols: usize,
        mean: DVector<f64>,
        var_diag: DVector<f64>,
        noise_variance: f64,
    ) -> Result<Self, DgmrfError> {
        if mean.len() != rows * cols || var_diag.len() != rows * cols {
            return Err(DgmrfError::InvalidInput("dimension mismatch".into()));
        }
        if var_diag.iter().any(|&v| v < 0.0) {
            return Err(DgmrfError::InvalidInput(
                "prior variances must be nonnegative".into(),
            ));
        }
        if !(noise_variance > 0.0) {
            return Err(DgmrfError::InvalidInput(
                "noise variance must be positive".into(),
            ));
        }
        Ok(Self { mean, var_diag, noise_variance, rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixels(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn var_diag(&self) -> &DVector<f64> {
        &self.var_diag
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// Exact log marginal density of one noisy image:
    /// product of `N(mean_i, var_i + gamma^2)` over pixels.
    pub fn log_marginal(&self, image: &ImageFrame<f64>) -> Result<f64, DgmrfError> {
        if image.len() != self.pixels() {
            return Err(DgmrfError::InvalidInput(format!(
                "image has {} pixels, prior expects {}",
                image.len(),
                self.pixels()
            )));
        }
        let mut acc = 0.0;
        for ((&x, &mu), &d) in image
            .as_slice()
            .iter()
            .zip(self.mean.iter())
            .zip(self.var_diag.iter())
        {
            let lambda = d + self.noise_variance;
            let r = x - mu;
            acc += (2.0 * std::f64::consts::PI * lambda).ln() + r * r / lambda;
        }
        Ok(-0.5 * acc)
    }
}

/// Profiled marginal log-likelihood at a candidate `gamma^2`: each pixel's
/// optimal prior variance is `max(0, v_i - gamma^2)`, so the per-pixel
/// marginal variance is `max(v_i, gamma^2)`.
fn profiled_log_likelihood(pixel_vars: &DVector<f64>, n: f64, gamma2: f64) -> f64 {
    let mut acc = 0.0;
    for &v in pixel_vars.iter() {
        let sigma2 = v.max(gamma2);
        acc += (2.0 * std::f64::consts::PI * sigma2).ln() + v / sigma2;
    }
    -0.5 * n * acc
}

/// Golden-section maximization of the profiled likelihood over
/// `gamma^2 in [1e-6, max_i v_i]`.
///
/// The profile is flat below `min_i v_i` and strictly decreasing beyond
/// it, so ties are resolved toward the larger argument; the search then
/// converges to the edge of the flat region, the largest maximizer. That
/// is the value the marginal model can actually identify (the flat region
/// itself carries no information about the noise split).
fn golden_section_gamma2(pixel_vars: &DVector<f64>, n: f64) -> f64 {
    let hi = pixel_vars.max();
    if !(hi > GAMMA2_FLOOR) {
        return GAMMA2_FLOOR;
    }
    let (mut a, mut b) = (GAMMA2_FLOOR, hi);
    let inv_phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = profiled_log_likelihood(pixel_vars, n, c);
    let mut fd = profiled_log_likelihood(pixel_vars, n, d);
    for _ in 0..200 {
        if b - a < 1e-12 * hi.max(1.0) {
            break;
        }
        if fc > fd {
            // Maximum is left of d.
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = profiled_log_likelihood(pixel_vars, n, c);
        } else {
            // On ties move right, toward the largest maximizer.
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = profiled_log_likelihood(pixel_vars, n, d);
        }
    }
    0.5 * (a + b)
}

/// Fits the diagonal prior to reference images: pixel-wise sample means,
/// prior variances `max(0, v_i - gamma^2)`, and the shared `gamma^2` from a
/// 1-D profiled-likelihood search.
pub fn fit_diagonal_prior(references: &[ImageFrame<f64>]) -> Result<DiagonalPrior, DgmrfError> {
    if references.len() < 2 {
        return Err(DgmrfError::InvalidInput(format!(
            "need at least 2 references to estimate variances, got {}",
            references.len()
        )));
    }
    let first = &references[0];
    if references.iter().any(|r| !r.same_shape(first)) {
        return Err(DgmrfError::InvalidInput(
            "reference images must share dimensions".into(),
        ));
    }
    let p = first.len();
    let n = references.len() as f64;

    let mut mean = DVector::zeros(p);
    for r in references {
        mean += r.to_vector();
    }
    mean /= n;

    // Maximum-likelihood pixel variances (divide by N).
    let mut pixel_vars = DVector::zeros(p);
    for r in references {
        for (i, &x) in r.as_slice().iter().enumerate() {
            let d = x - mean[i];
            pixel_vars[i] += d * d;
        }
    }
    pixel_vars /= n;

    let gamma2 = golden_section_gamma2(&pixel_vars, n);
    let var_diag = pixel_vars.map(|v| (v - gamma2).max(0.0));
    DiagonalPrior::from_parts(first.rows(), first.cols(), mean, var_diag, gamma2)
}
