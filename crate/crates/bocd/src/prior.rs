use blast_dgmrf::{DiagonalPrior, ElicitedPrior};
use blast_linalg::EigenBasis;
use nalgebra::{DMatrix, DVector};

use crate::BocdError;

/// Precision cap for diagonal-prior pixels with zero prior variance.
const MAX_PIXEL_PRECISION: f64 = 1e10;

/// A Gaussian image prior in spectral form: `Q0 = P diag(D) P^T` with mean
/// `mu0`. This is the one interface the engine consumes; the structured and
/// the diagonal priors both adapt to it (the diagonal case with `P = I`,
/// stored implicitly so projections stay O(p)).
#[derive(Debug, Clone)]
pub struct SpectralPrior {
    rows: usize,
    cols: usize,
    /// Eigenvector matrix `P`; `None` means the identity.
    vectors: Option<DMatrix<f64>>,
    /// Eigenvalues `D` of the prior precision.
    values: DVector<f64>,
    mean: DVector<f64>,
    /// `P^T mu0`, precomputed.
    proj_mean: DVector<f64>,
    /// Elicited observation-noise variance; the engine's default sigma^2.
    noise_variance: f64,
}

impl SpectralPrior {
    pub fn new(
        rows: usize,
        cols: usize,
        vectors: Option<DMatrix<f64>>,
        values: DVector<f64>,
        mean: DVector<f64>,
        noise_variance: f64,
    ) -> Result<Self, BocdError> {
        let p = rows * cols;
        if mean.len() != p || values.len() != p {
            return Err(BocdError::InvalidInput(format!(
                "prior dimensions disagree with {rows}x{cols} image"
            )));
        }
        if let Some(v) = &vectors {
            if v.nrows() != p || v.ncols() != p {
                return Err(BocdError::InvalidInput(
                    "eigenvector matrix does not match pixel count".into(),
                ));
            }
        }
        if values.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(BocdError::InvalidInput(
                "prior eigenvalues must be positive and finite".into(),
            ));
        }
        if !(noise_variance > 0.0) {
            return Err(BocdError::InvalidInput(
                "noise variance must be positive".into(),
            ));
        }
        let proj_mean = match &vectors {
            Some(v) => v.tr_mul(&mean),
            None => mean.clone(),
        };
        Ok(Self { rows, cols, vectors, values, mean, proj_mean, noise_variance })
    }

    pub fn from_elicited(prior: &ElicitedPrior) -> Self {
        Self::new(
            prior.rows(),
            prior.cols(),
            Some(prior.basis().vectors().clone()),
            prior.basis().values().clone(),
            prior.mu0().clone(),
            prior.noise_variance(),
        )
        .expect("elicited prior is well-formed")
    }

    /// Diagonal ablation prior through the same interface: `P = I` and
    /// spectral precision `1 / d_i`, capped for zero-variance pixels.
    pub fn from_diagonal(prior: &DiagonalPrior) -> Self {
        let values = prior
            .var_diag()
            .map(|d| if d > 1.0 / MAX_PIXEL_PRECISION { 1.0 / d } else { MAX_PIXEL_PRECISION });
        Self::new(
            prior.rows(),
            prior.cols(),
            None,
            values,
            prior.mean().clone(),
            prior.noise_variance(),
        )
        .expect("diagonal prior is well-formed")
    }

    pub fn from_basis(
        rows: usize,
        cols: usize,
        basis: &EigenBasis<f64>,
        mean: DVector<f64>,
        noise_variance: f64,
    ) -> Result<Self, BocdError> {
        Self::new(
            rows,
            cols,
            Some(basis.vectors().clone()),
            basis.values().clone(),
            mean,
            noise_variance,
        )
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

    /// Spectral precision eigenvalues `D`.
    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// `P^T mu0`.
    pub fn proj_mean(&self) -> &DVector<f64> {
        &self.proj_mean
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// `P^T x`: the O(p^2) projection done once per incoming frame
    /// (O(p) when the basis is the identity).
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.vectors {
            Some(v) => v.tr_mul(x),
            None => x.clone(),
        }
    }

    /// `P y`.
    pub fn unproject(&self, y: &DVector<f64>) -> DVector<f64> {
        match &self.vectors {
            Some(v) => v * y,
            None => y.clone(),
        }
    }

    /// `P M P^T`: a spectral-domain matrix back in pixel coordinates
    /// (diagnostics and oracle tests).
    pub fn unproject_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.vectors {
            Some(v) => v * m * v.transpose(),
            None => m.clone(),
        }
    }
}
