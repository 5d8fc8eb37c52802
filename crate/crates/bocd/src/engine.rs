//! The run-length posterior recursion.
//!
//! Each hypothesis `r` carries the sufficient statistics of "the last
//! change happened `r` steps ago": the number of frames in the run, their
//! summed eigenbasis projection, and the log joint density
//! `log [r_t, X_{1:t}]`. One step combines, per previous hypothesis,
//!
//! ```text
//! (1) the log predictive of the new frame under that run's posterior,
//! (2) the hazard prior  log h  /  log(1 - h),
//! (3) the stored log joint,
//! ```
//!
//! growing every run by one and log-sum-exping all change paths into the
//! new `r = 0` hypothesis, then normalizes. The new frame is projected into
//! the eigenbasis once (O(p^2)) and every hypothesis update is O(p), so a
//! step costs O(p^2 + R p).

use std::sync::Arc;

use blast_linalg::{log_sum_exp, ImageFrame};
use nalgebra::DVector;

use crate::moments::LN_2PI;
use crate::{BocdError, SpectralPrior};

/// Prior over change arrivals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hazard {
    /// Memoryless arrivals: `h(tau) = 1/lambda` for every run length.
    Constant { lambda: f64 },
}

impl Hazard {
    pub fn constant(lambda: f64) -> Result<Self, BocdError> {
        if !(lambda >= 1.0) {
            return Err(BocdError::InvalidInput(format!(
                "hazard 1/lambda must lie in (0, 1]; got lambda = {lambda}"
            )));
        }
        Ok(Self::Constant { lambda })
    }

    /// `h(tau)`: change probability after `tau - 1` quiet steps.
    pub fn probability(&self, _tau: usize) -> f64 {
        match self {
            Self::Constant { lambda } => 1.0 / lambda,
        }
    }

    fn log_change(&self, tau: usize) -> f64 {
        self.probability(tau).ln()
    }

    fn log_growth(&self, tau: usize) -> f64 {
        (1.0 - self.probability(tau)).ln()
    }
}

/// Sufficient statistics of one run-length hypothesis.
#[derive(Debug, Clone)]
pub struct RunHypothesis {
    run_length: usize,
    count: usize,
    proj_sum: DVector<f64>,
    log_joint: f64,
}

impl RunHypothesis {
    pub fn run_length(&self) -> usize {
        self.run_length
    }

    /// Number of frames absorbed by this run (`run_length + 1`).
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn proj_sum(&self) -> &DVector<f64> {
        &self.proj_sum
    }

    /// `log [r_t, X_{1:t}]` — a joint density, finite but unnormalized.
    pub fn log_joint(&self) -> f64 {
        self.log_joint
    }
}

/// Normalized run-length posterior after a step; index = run length.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLengthPosterior {
    probs: Vec<f64>,
    run_lengths: Vec<usize>,
}

impl RunLengthPosterior {
    /// Builds a posterior with support `{0, ..., probs.len() - 1}`.
    pub fn from_probabilities(probs: Vec<f64>) -> Self {
        let run_lengths = (0..probs.len()).collect();
        Self { probs, run_lengths }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn run_lengths(&self) -> &[usize] {
        &self.run_lengths
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.run_lengths.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Total mass at run lengths `<= window`.
    pub fn mass_at_most(&self, window: usize) -> f64 {
        self.iter()
            .filter(|(r, _)| *r <= window)
            .map(|(_, p)| p)
            .sum()
    }
}

/// Per-run-length constants of the predictive density. They depend only on
/// the observation count, the prior spectrum and sigma^2, so each entry is
/// built once and reused across steps; the per-hypothesis work then stays
/// free of logarithms and divisions.
#[derive(Debug, Clone)]
struct PredictiveConstants {
    /// `sum_i log(2 pi lambda_i)` for `lambda_i = 1/(d_i + n/sigma^2) + sigma^2`.
    log_norm: f64,
    inv_lambda: Vec<f64>,
    /// `1 / (d_i + n / sigma^2)`.
    inv_precision: Vec<f64>,
}

/// Online state of the detector for one stream.
///
/// `step` must be called serially per stream; the state owns everything it
/// mutates and the shared prior is immutable.
#[derive(Debug, Clone)]
pub struct RunLengthState {
    prior: Arc<SpectralPrior>,
    hazard: Hazard,
    sigma2: f64,
    truncation: Option<usize>,
    time: usize,
    hypotheses: Vec<RunHypothesis>,
    /// `d_i * u0_i`, the prior contribution to every posterior mean.
    prior_pull: DVector<f64>,
    /// Indexed by observation count `n`.
    constants: Vec<PredictiveConstants>,
}

impl RunLengthState {
    /// `sigma2 = None` uses the noise variance elicited with the prior.
    pub fn new(
        prior: Arc<SpectralPrior>,
        hazard: Hazard,
        sigma2: Option<f64>,
        truncation: Option<usize>,
    ) -> Result<Self, BocdError> {
        let sigma2 = sigma2.unwrap_or_else(|| prior.noise_variance());
        if !(sigma2 > 0.0) {
            return Err(BocdError::InvalidInput(format!(
                "sigma^2 must be positive, got {sigma2}"
            )));
        }
        if truncation == Some(0) {
            return Err(BocdError::InvalidInput(
                "truncation bound must be at least 1".into(),
            ));
        }
        let prior_pull = prior.values().component_mul(prior.proj_mean());
        Ok(Self {
            prior,
            hazard,
            sigma2,
            truncation,
            time: 0,
            hypotheses: Vec::new(),
            prior_pull,
            constants: Vec::new(),
        })
    }

    fn ensure_constants(&mut self, max_count: usize) {
        while self.constants.len() <= max_count {
            let n = self.constants.len();
            let rate = n as f64 / self.sigma2;
            let p = self.prior.pixels();
            let mut log_norm = 0.0;
            let mut inv_lambda = Vec::with_capacity(p);
            let mut inv_precision = Vec::with_capacity(p);
            for &d in self.prior.values().iter() {
                let prec = d + rate;
                let lambda = 1.0 / prec + self.sigma2;
                log_norm += LN_2PI + lambda.ln();
                inv_lambda.push(1.0 / lambda);
                inv_precision.push(1.0 / prec);
            }
            self.constants.push(PredictiveConstants { log_norm, inv_lambda, inv_precision });
        }
    }

    /// Predictive log density of a projected frame under the posterior of a
    /// run with `count` observations summed into `proj_sum`; pure fused
    /// arithmetic against the cached per-count constants.
    fn cached_log_predictive(
        &self,
        count: usize,
        proj_sum: &DVector<f64>,
        projected: &DVector<f64>,
    ) -> f64 {
        let constants = &self.constants[count];
        let inv_sigma2 = 1.0 / self.sigma2;
        let c = proj_sum.as_slice();
        let x = projected.as_slice();
        let pull = self.prior_pull.as_slice();
        let mut quad = 0.0;
        for i in 0..x.len() {
            let mean = (c[i] * inv_sigma2 + pull[i]) * constants.inv_precision[i];
            let y = x[i] - mean;
            quad += y * y * constants.inv_lambda[i];
        }
        -0.5 * (constants.log_norm + quad)
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn hypotheses(&self) -> &[RunHypothesis] {
        &self.hypotheses
    }

    pub fn prior(&self) -> &SpectralPrior {
        &self.prior
    }

    /// Absorbs one frame and returns the normalized run-length posterior.
    pub fn step(&mut self, frame: &ImageFrame<f64>) -> Result<RunLengthPosterior, BocdError> {
        if frame.rows() != self.prior.rows() || frame.cols() != self.prior.cols() {
            return Err(BocdError::InvalidInput(format!(
                "frame is {}x{}, prior expects {}x{}",
                frame.rows(),
                frame.cols(),
                self.prior.rows(),
                self.prior.cols()
            )));
        }
        if !frame.is_finite() {
            return Err(BocdError::InvalidInput(
                "frame contains non-finite pixels".into(),
            ));
        }
        // The one O(p^2) operation of the step.
        let projected = self.prior.project(&frame.to_vector());
        let max_count = self.hypotheses.last().map(|h| h.count).unwrap_or(0);
        self.ensure_constants(max_count);
        let zero_sum = DVector::zeros(self.prior.pixels());
        let log_marginal = self.cached_log_predictive(0, &zero_sum, &projected);

        if self.time == 0 {
            // The first frame starts run 0 with probability one.
            self.hypotheses = vec![RunHypothesis {
                run_length: 0,
                count: 1,
                proj_sum: projected,
                log_joint: log_marginal,
            }];
            self.time = 1;
            return Ok(RunLengthPosterior { probs: vec![1.0], run_lengths: vec![0] });
        }

        // Per-hypothesis predictive (term 1), O(p) each against cached
        // per-count constants.
        let log_preds: Vec<f64> = self
            .hypotheses
            .iter()
            .map(|h| self.cached_log_predictive(h.count, &h.proj_sum, &projected))
            .collect();

        // Change path: log-sum-exp over every previous run length.
        let change_terms: Vec<f64> = self
            .hypotheses
            .iter()
            .map(|h| self.hazard.log_change(h.run_length + 1) + h.log_joint)
            .collect();
        let change_log_joint = log_marginal + log_sum_exp(&change_terms);

        let mut next = Vec::with_capacity(self.hypotheses.len() + 1);
        next.push(RunHypothesis {
            run_length: 0,
            count: 1,
            proj_sum: projected.clone(),
            log_joint: change_log_joint,
        });
        for (hyp, lp) in std::mem::take(&mut self.hypotheses).into_iter().zip(&log_preds) {
            let grown = RunHypothesis {
                run_length: hyp.run_length + 1,
                count: hyp.count + 1,
                proj_sum: hyp.proj_sum + &projected,
                log_joint: lp + self.hazard.log_growth(hyp.run_length + 1) + hyp.log_joint,
            };
            next.push(grown);
        }

        // Window-limited truncation: drop hypotheses beyond the bound; the
        // posterior renormalizes over the survivors, which spreads the
        // discarded mass proportionally.
        if let Some(bound) = self.truncation {
            next.retain(|h| h.run_length <= bound);
        }

        let log_joints: Vec<f64> = next.iter().map(|h| h.log_joint).collect();
        let evidence = log_sum_exp(&log_joints);
        if !evidence.is_finite() {
            let worst = log_preds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            return Err(BocdError::Numeric(format!(
                "all {} joint densities underflowed at t = {} \
                 (best log predictive {worst:.3e}, marginal {log_marginal:.3e})",
                next.len(),
                self.time + 1,
            )));
        }

        let probs: Vec<f64> = next.iter().map(|h| (h.log_joint - evidence).exp()).collect();
        let run_lengths: Vec<usize> = next.iter().map(|h| h.run_length).collect();
        self.hypotheses = next;
        self.time += 1;
        Ok(RunLengthPosterior { probs, run_lengths })
    }
}
