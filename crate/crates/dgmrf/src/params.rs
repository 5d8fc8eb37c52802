use blast_linalg::{ConvFilter, FilterKind, ImageFrame, LinearLayer};
use nalgebra::DVector;

use crate::DgmrfError;

/// Model parameters of the deep GMRF: the layer stack and the shared
/// observation-noise variance (stored as `log gamma` so optimization stays
/// unconstrained).
#[derive(Debug, Clone)]
pub struct DgmrfParams {
    layers: Vec<LinearLayer<f64>>,
    log_gamma: f64,
}

impl DgmrfParams {
    /// All layers must share one filter kind, and the noise variance must be
    /// strictly positive.
    pub fn new(layers: Vec<LinearLayer<f64>>, noise_variance: f64) -> Result<Self, DgmrfError> {
        if layers.is_empty() {
            return Err(DgmrfError::InvalidInput("need at least one layer".into()));
        }
        let kind = layers[0].filter.kind();
        if layers.iter().any(|l| l.filter.kind() != kind) {
            return Err(DgmrfError::InvalidInput(
                "all layers must share one filter kind".into(),
            ));
        }
        if !(noise_variance > 0.0) {
            return Err(DgmrfError::InvalidInput(format!(
                "noise variance must be positive, got {noise_variance}"
            )));
        }
        Ok(Self { layers, log_gamma: 0.5 * noise_variance.ln() })
    }

    pub fn layers(&self) -> &[LinearLayer<f64>] {
        &self.layers
    }

    pub fn filter_kind(&self) -> FilterKind {
        self.layers[0].filter.kind()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// `gamma^2 = exp(2 log gamma)`.
    pub fn noise_variance(&self) -> f64 {
        (2.0 * self.log_gamma).exp()
    }

    pub fn log_gamma(&self) -> f64 {
        self.log_gamma
    }
}

/// Variational parameters: one mean vector per reference image (each
/// reference has its own latent image to localize) and one shared diagonal
/// standard-deviation vector, stored as logs so positivity is structural.
#[derive(Debug, Clone)]
pub struct VariationalParams {
    means: Vec<DVector<f64>>,
    log_std: DVector<f64>,
}

impl VariationalParams {
    pub fn new(means: Vec<DVector<f64>>, std_diag: DVector<f64>) -> Result<Self, DgmrfError> {
        if means.is_empty() {
            return Err(DgmrfError::InvalidInput("need at least one mean".into()));
        }
        if means.iter().any(|m| m.len() != std_diag.len()) {
            return Err(DgmrfError::InvalidInput(
                "mean and std lengths differ".into(),
            ));
        }
        if std_diag.iter().any(|&s| !(s > 0.0)) {
            return Err(DgmrfError::InvalidInput(
                "std entries must be strictly positive".into(),
            ));
        }
        Ok(Self { means, log_std: std_diag.map(f64::ln) })
    }

    pub fn from_logs(means: Vec<DVector<f64>>, log_std: DVector<f64>) -> Self {
        assert!(means.iter().all(|m| m.len() == log_std.len()));
        Self { means, log_std }
    }

    pub fn num_latents(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn mean(&self, j: usize) -> &DVector<f64> {
        &self.means[j]
    }

    pub fn log_std(&self) -> &DVector<f64> {
        &self.log_std
    }

    pub fn std_diag(&self) -> DVector<f64> {
        self.log_std.map(f64::exp)
    }
}

/// Packing layout mapping structured parameters onto one flat vector for
/// optimization and finite-difference checks.
///
/// Order: per layer `[a1..a5, intercept (p)]`, then the per-reference
/// variational means (`num_latents * p`), the shared variational log-std
/// (p), and `log gamma` last.
#[derive(Debug, Clone, Copy)]
pub struct ParamLayout {
    pub num_layers: usize,
    pub rows: usize,
    pub cols: usize,
    pub kind: FilterKind,
    pub num_latents: usize,
}

impl ParamLayout {
    pub fn for_model(params: &DgmrfParams, var: &VariationalParams, rows: usize, cols: usize) -> Self {
        Self {
            num_layers: params.num_layers(),
            rows,
            cols,
            kind: params.filter_kind(),
            num_latents: var.num_latents(),
        }
    }

    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn len(&self) -> usize {
        let p = self.pixels();
        self.num_layers * (5 + p) + (self.num_latents + 1) * p + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn pack(&self, params: &DgmrfParams, var: &VariationalParams) -> DVector<f64> {
        let p = self.pixels();
        let mut flat = DVector::zeros(self.len());
        let mut at = 0;
        for layer in params.layers() {
            for &w in layer.filter.weights() {
                flat[at] = w;
                at += 1;
            }
            flat.rows_mut(at, p).copy_from_slice(layer.intercept.as_slice());
            at += p;
        }
        for mean in var.means() {
            flat.rows_mut(at, p).copy_from(mean);
            at += p;
        }
        flat.rows_mut(at, p).copy_from(var.log_std());
        at += p;
        flat[at] = params.log_gamma();
        flat
    }

    pub fn unpack(&self, flat: &DVector<f64>) -> (DgmrfParams, VariationalParams) {
        assert_eq!(flat.len(), self.len(), "flat vector does not match layout");
        let p = self.pixels();
        let mut at = 0;
        let mut layers = Vec::with_capacity(self.num_layers);
        for _ in 0..self.num_layers {
            let mut w = [0.0; 5];
            for wi in &mut w {
                *wi = flat[at];
                at += 1;
            }
            let intercept =
                ImageFrame::new(self.rows, self.cols, flat.as_slice()[at..at + p].to_vec())
                    .expect("layout dimensions are valid");
            at += p;
            layers.push(LinearLayer::new(ConvFilter::new(self.kind, w), intercept));
        }
        let mut means = Vec::with_capacity(self.num_latents);
        for _ in 0..self.num_latents {
            means.push(DVector::from_column_slice(&flat.as_slice()[at..at + p]));
            at += p;
        }
        let log_std = DVector::from_column_slice(&flat.as_slice()[at..at + p]);
        at += p;
        let log_gamma = flat[at];
        let params = DgmrfParams { layers, log_gamma };
        let var = VariationalParams::from_logs(means, log_std);
        (params, var)
    }
}
