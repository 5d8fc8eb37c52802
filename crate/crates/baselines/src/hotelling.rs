//! PCA-projected Hotelling-T2 monitoring with CUSUM accumulation:
//!
//! ```text
//! S_t = (S_{t-1})^+ + (xbar - mu_pre)^T Sigma_pre^{-1} (xbar - mu_pre) - d
//! ```
//!
//! where `xbar` averages the last `w` frames projected onto the top
//! principal components of the reference data.

use std::collections::VecDeque;

use blast_linalg::ImageFrame;
use nalgebra::{DMatrix, DVector};

use crate::BaselineError;

/// Drift constant `d`: fixed, or estimated from the reference quadratic
/// forms as `mean + margin * std`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriftSpec {
    Fixed(f64),
    Estimate,
}

#[derive(Debug, Clone)]
pub struct HotellingConfig {
    pub n_components: usize,
    pub window: usize,
    pub drift: DriftSpec,
    pub drift_margin: f64,
}

impl Default for HotellingConfig {
    fn default() -> Self {
        Self { n_components: 15, window: 5, drift: DriftSpec::Estimate, drift_margin: 3.0 }
    }
}

/// Fitted monitoring model: projection onto the PCA score space plus the
/// pre-change score moments. Immutable and shareable.
#[derive(Debug, Clone)]
pub struct HotellingModel {
    data_mean: DVector<f64>,
    /// `k x p` projection (principal axes as rows).
    projection: DMatrix<f64>,
    score_mean: DVector<f64>,
    score_cov_inv: DMatrix<f64>,
    drift: f64,
    window: usize,
    rows: usize,
    cols: usize,
}

impl HotellingModel {
    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Projects a vectorized frame into score space.
    pub fn score(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.projection * (x - &self.data_mean)
    }

    /// Quadratic form of one score vector against the pre-change moments.
    pub fn deviation(&self, score: &DVector<f64>) -> f64 {
        let centered = score - &self.score_mean;
        centered.dot(&(&self.score_cov_inv * &centered))
    }

    pub fn monitor(&self) -> HotellingMonitor {
        HotellingMonitor { model: self.clone(), buffer: VecDeque::new(), statistic: 0.0 }
    }
}

/// Fits the PCA basis and pre-change score moments from reference frames.
pub fn fit_hotelling(
    references: &[ImageFrame<f64>],
    config: &HotellingConfig,
) -> Result<HotellingModel, BaselineError> {
    let n = references.len();
    let k = config.n_components;
    if k == 0 || config.window == 0 {
        return Err(BaselineError::InvalidInput(
            "components and window must be positive".into(),
        ));
    }
    if n < k + 1 {
        return Err(BaselineError::InvalidInput(format!(
            "need at least {} references for {k} components, got {n}",
            k + 1
        )));
    }
    let first = &references[0];
    let p = first.len();
    if references.iter().any(|r| !r.same_shape(first)) {
        return Err(BaselineError::InvalidInput(
            "reference images must share dimensions".into(),
        ));
    }
    if k > p {
        return Err(BaselineError::InvalidInput(format!(
            "{k} components exceed {p} pixels"
        )));
    }

    let mut data_mean = DVector::zeros(p);
    for r in references {
        data_mean += r.to_vector();
    }
    data_mean /= n as f64;

    // Centered data, one row per reference.
    let mut centered = DMatrix::zeros(n, p);
    for (i, r) in references.iter().enumerate() {
        let v = r.to_vector() - &data_mean;
        centered.row_mut(i).copy_from(&v.transpose());
    }
    if centered.iter().all(|&x| x == 0.0) {
        return Err(BaselineError::FitError(
            "references have zero variance; PCA is undefined".into(),
        ));
    }

    let svd = centered.clone().svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| BaselineError::FitError("SVD failed to produce axes".into()))?;
    if v_t.nrows() < k {
        return Err(BaselineError::FitError(format!(
            "rank {} below requested {k} components",
            v_t.nrows()
        )));
    }
    let projection = v_t.rows(0, k).into_owned();

    // Score-space moments over the references.
    let scores: Vec<DVector<f64>> = (0..n)
        .map(|i| &projection * centered.row(i).transpose())
        .collect();
    let mut score_mean = DVector::zeros(k);
    for s in &scores {
        score_mean += s;
    }
    score_mean /= n as f64;
    let mut cov = DMatrix::zeros(k, k);
    for s in &scores {
        let c = s - &score_mean;
        cov += &c * c.transpose();
    }
    cov /= (n - 1) as f64;
    // Small-N regularization before inversion.
    let ridge = 1e-6 * cov.trace() / k as f64;
    for i in 0..k {
        cov[(i, i)] += ridge;
    }
    let score_cov_inv = cov
        .cholesky()
        .ok_or_else(|| {
            BaselineError::FitError("score covariance is rank deficient after regularization".into())
        })?
        .inverse();

    let mut model = HotellingModel {
        data_mean,
        projection,
        score_mean,
        score_cov_inv,
        drift: 0.0,
        window: config.window,
        rows: first.rows(),
        cols: first.cols(),
    };
    model.drift = match config.drift {
        DriftSpec::Fixed(d) => {
            if d < 0.0 {
                return Err(BaselineError::InvalidInput("drift must be nonnegative".into()));
            }
            d
        }
        DriftSpec::Estimate => {
            let quads: Vec<f64> = scores.iter().map(|s| model.deviation(s)).collect();
            let mean = quads.iter().sum::<f64>() / n as f64;
            let var = quads.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            mean + config.drift_margin * var.sqrt()
        }
    };
    Ok(model)
}

/// Online CUSUM state over one stream; create with [`HotellingModel::monitor`].
#[derive(Debug, Clone)]
pub struct HotellingMonitor {
    model: HotellingModel,
    buffer: VecDeque<DVector<f64>>,
    statistic: f64,
}

impl HotellingMonitor {
    pub fn statistic(&self) -> f64 {
        self.statistic
    }

    /// Absorbs one frame and returns the updated CUSUM statistic. During
    /// warm-up (fewer than `w` frames seen) the window average uses what is
    /// available.
    pub fn step(&mut self, frame: &ImageFrame<f64>) -> Result<f64, BaselineError> {
        if frame.rows() != self.model.rows || frame.cols() != self.model.cols {
            return Err(BaselineError::InvalidInput(format!(
                "frame is {}x{}, model expects {}x{}",
                frame.rows(),
                frame.cols(),
                self.model.rows,
                self.model.cols
            )));
        }
        self.buffer.push_back(frame.to_vector());
        if self.buffer.len() > self.model.window {
            self.buffer.pop_front();
        }
        let mut avg = DVector::zeros(self.buffer[0].len());
        for x in &self.buffer {
            avg += x;
        }
        avg /= self.buffer.len() as f64;

        let deviation = self.model.deviation(&self.model.score(&avg));
        self.statistic = self.statistic.max(0.0) + deviation - self.model.drift;
        Ok(self.statistic)
    }
}
