//! Prior elicitation: fit the deep GMRF to reference images by ascending
//! the ELBO with Adam, then assemble the induced Gaussian prior
//! `(mu0, Q0)` and its one-shot eigendecomposition.

use blast_linalg::{
    assemble_precision, symmetric_eigendecomposition, ConvFilter, EigenBasis, FilterKind,
    ImageFrame, LinearLayer, SparseSym,
};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{
    elbo_with_grad, AdamConfig, AdamOptimizer, DgmrfError, DgmrfParams, ParamLayout,
    VariationalParams,
};

/// Elicitation budget and reproducibility knobs.
#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub mc_samples: usize,
    pub seed: u64,
    /// Stop early once the smoothed ELBO plateaus.
    pub early_stop: Option<EarlyStop>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            learning_rate: 0.01,
            mc_samples: 1,
            seed: 0,
            early_stop: Some(EarlyStop::default()),
        }
    }
}

/// Plateau rule: relative improvement of the window-averaged ELBO below
/// `rel_tol` over one `window` stops the run.
#[derive(Debug, Clone, Copy)]
pub struct EarlyStop {
    pub window: usize,
    pub rel_tol: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self { window: 100, rel_tol: 1e-5 }
    }
}

/// How an elicitation run went; kept separate from the prior so the prior
/// file stays small.
#[derive(Debug, Clone)]
pub struct FitReport {
    /// ELBO value at every iteration (before that iteration's update).
    pub trace: Vec<f64>,
    pub stopped_early: bool,
}

/// Provenance recorded alongside a serialized prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    pub iterations: u64,
    pub final_elbo: f64,
}

/// The elicited Gaussian prior `N(mu0, Q0^{-1})` with observation-noise
/// variance and the spectral factorization used by the online engine.
#[derive(Debug, Clone)]
pub struct ElicitedPrior {
    mu0: DVector<f64>,
    q0: SparseSym<f64>,
    basis: EigenBasis<f64>,
    noise_variance: f64,
    rows: usize,
    cols: usize,
    provenance: Provenance,
}

impl ElicitedPrior {
    pub fn from_parts(
        rows: usize,
        cols: usize,
        mu0: DVector<f64>,
        q0: SparseSym<f64>,
        basis: EigenBasis<f64>,
        noise_variance: f64,
        provenance: Provenance,
    ) -> Result<Self, DgmrfError> {
        let p = rows * cols;
        if mu0.len() != p || q0.dim() != p || basis.dim() != p {
            return Err(DgmrfError::InvalidInput(format!(
                "prior parts disagree on dimension (p = {p})"
            )));
        }
        if !(noise_variance > 0.0) {
            return Err(DgmrfError::InvalidInput(
                "noise variance must be positive".into(),
            ));
        }
        Ok(Self { mu0, q0, basis, noise_variance, rows, cols, provenance })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixels(&self) -> usize {
        self.mu0.len()
    }

    pub fn mu0(&self) -> &DVector<f64> {
        &self.mu0
    }

    pub fn precision(&self) -> &SparseSym<f64> {
        &self.q0
    }

    pub fn basis(&self) -> &EigenBasis<f64> {
        &self.basis
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Exact log marginal density of one noisy image under the prior:
    /// `N(mu0, Q0^{-1} + gamma^2 I)`, evaluated spectrally in O(p^2).
    pub fn log_marginal(&self, image: &ImageFrame<f64>) -> Result<f64, DgmrfError> {
        if image.len() != self.pixels() {
            return Err(DgmrfError::InvalidInput(format!(
                "image has {} pixels, prior expects {}",
                image.len(),
                self.pixels()
            )));
        }
        let centered = image.to_vector() - &self.mu0;
        let y = self.basis.project(&centered);
        let mut acc = 0.0;
        for (yi, &d) in y.iter().zip(self.basis.values().iter()) {
            let lambda = 1.0 / d + self.noise_variance;
            acc += (2.0 * std::f64::consts::PI * lambda).ln() + yi * yi / lambda;
        }
        Ok(-0.5 * acc)
    }
}

/// Initialization from the elicitation recipe: filter weights and intercepts
/// i.i.d. `N(0, 0.01)`, noise variance 1, variational mean at the sample
/// average of the references, variational stds from a positively truncated
/// standard normal.
pub fn initialize_parameters(
    references: &[ImageFrame<f64>],
    num_layers: usize,
    kind: FilterKind,
    seed: u64,
) -> Result<(DgmrfParams, VariationalParams), DgmrfError> {
    let first = references
        .first()
        .ok_or_else(|| DgmrfError::InvalidInput("need at least one reference image".into()))?;
    let (q1, q2) = (first.rows(), first.cols());
    if references.iter().any(|r| !r.same_shape(first)) {
        return Err(DgmrfError::InvalidInput(
            "reference images must share dimensions".into(),
        ));
    }
    if num_layers == 0 {
        return Err(DgmrfError::InvalidInput("need at least one layer".into()));
    }
    let p = q1 * q2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = move |sd: f64| -> f64 {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * sd
    };

    let layers: Vec<LinearLayer<f64>> = (0..num_layers)
        .map(|_| {
            let weights = [
                normal(0.1),
                normal(0.1),
                normal(0.1),
                normal(0.1),
                normal(0.1),
            ];
            let intercept = ImageFrame::from_fn(q1, q2, |_, _| normal(0.1));
            LinearLayer::new(ConvFilter::new(kind, weights), intercept)
        })
        .collect();
    let params = DgmrfParams::new(layers, 1.0)?;

    // Anchored at the first reference so identical references reproduce
    // that image exactly.
    let anchor = references[0].to_vector();
    let mut mean = DVector::zeros(p);
    for r in references {
        mean += r.to_vector() - &anchor;
    }
    mean /= references.len() as f64;
    mean += anchor;

    let std = DVector::from_fn(p, |_, _| loop {
        let draw = normal(1.0);
        if draw > 0.0 {
            break draw;
        }
    });
    // Every latent starts at the sample average and individuates during
    // optimization.
    let means = vec![mean; references.len()];
    let var = VariationalParams::new(means, std)?;
    Ok((params, var))
}

/// Runs the full elicitation: initialize, ascend the ELBO with Adam, then
/// assemble `(mu0, Q0)` and eigendecompose. Bit-reproducible for a fixed
/// config in single-threaded use.
pub fn elicit_prior(
    references: &[ImageFrame<f64>],
    num_layers: usize,
    kind: FilterKind,
    config: &OptimizerConfig,
) -> Result<(ElicitedPrior, FitReport), DgmrfError> {
    let (params, var) = initialize_parameters(references, num_layers, kind, config.seed)?;
    let (q1, q2) = (references[0].rows(), references[0].cols());
    let layout = ParamLayout::for_model(&params, &var, q1, q2);
    let mut flat = layout.pack(&params, &var);
    let mut opt = AdamOptimizer::new(
        layout.len(),
        AdamConfig { learning_rate: config.learning_rate, ..AdamConfig::default() },
    );

    let mut trace = Vec::with_capacity(config.iterations);
    let mut stopped_early = false;
    for iter in 0..config.iterations {
        let (params, var) = layout.unpack(&flat);
        let (value, grad) = elbo_with_grad(
            &params,
            &var,
            references,
            config.mc_samples,
            config.seed,
            iter as u64,
        )?;
        trace.push(value);
        // Ascent: Adam minimizes, so feed the negated gradient.
        opt.step(&mut flat, &(-grad))?;

        if let Some(stop) = config.early_stop {
            let w = stop.window;
            if w > 0 && trace.len() >= 2 * w {
                let recent: f64 = trace[trace.len() - w..].iter().sum::<f64>() / w as f64;
                let older: f64 =
                    trace[trace.len() - 2 * w..trace.len() - w].iter().sum::<f64>() / w as f64;
                let rel = (recent - older) / older.abs().max(1.0);
                if rel < stop.rel_tol {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    let (params, _) = layout.unpack(&flat);
    build_prior(&params, q1, q2, config.seed, trace, stopped_early)
}

/// Assembles the prior from fitted (or initialized) model parameters.
pub(crate) fn build_prior(
    params: &DgmrfParams,
    q1: usize,
    q2: usize,
    seed: u64,
    trace: Vec<f64>,
    stopped_early: bool,
) -> Result<(ElicitedPrior, FitReport), DgmrfError> {
    for (l, layer) in params.layers().iter().enumerate() {
        if params.filter_kind() == FilterKind::Seq && layer.filter.weights()[0].abs() < 1e-8 {
            return Err(DgmrfError::ElicitationFailed(format!(
                "layer {l} is numerically singular (|a1| = {:.3e} < 1e-8); \
                 final ELBO {:?}",
                layer.filter.weights()[0].abs(),
                trace.last()
            )));
        }
    }
    let (q0_dense, mu0) = assemble_precision(params.layers(), q1, q2)
        .map_err(|e| DgmrfError::ElicitationFailed(format!("prior assembly failed: {e}")))?;
    let q0 = SparseSym::from_dense(&q0_dense)?;
    let basis = symmetric_eigendecomposition(&q0_dense)?;
    let provenance = Provenance {
        seed,
        iterations: trace.len() as u64,
        final_elbo: trace.last().copied().unwrap_or(f64::NAN),
    };
    let prior = ElicitedPrior::from_parts(
        q1,
        q2,
        mu0,
        q0,
        basis,
        params.noise_variance(),
        provenance,
    )?;
    Ok((prior, FitReport { trace, stopped_early }))
}

/// Elicitation without optimization: assemble the prior straight from the
/// random initialization (smoke path for `--iters 0`).
pub fn elicit_prior_from_init(
    references: &[ImageFrame<f64>],
    num_layers: usize,
    kind: FilterKind,
    seed: u64,
) -> Result<(ElicitedPrior, FitReport), DgmrfError> {
    let (params, _) = initialize_parameters(references, num_layers, kind, seed)?;
    build_prior(&params, references[0].rows(), references[0].cols(), seed, Vec::new(), false)
}
