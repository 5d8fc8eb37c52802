//! Per-step cost measurement across image sizes.
//!
//! The engine's step cost is dominated by one `P^T x` projection, so wall
//! time should scale quadratically in the pixel count. To keep the bench
//! setup cheap at large sizes, the prior comes from a symmetric
//! cross-stencil operator whose eigenbasis is known in closed form (the
//! 2-D discrete sine basis), built in O(p^2) instead of an O(p^3)
//! factorization; the engine sees exactly the same dense-basis work as
//! with an elicited prior.

use std::sync::Arc;
use std::time::Instant;

use blast_bocd::{Hazard, RunLengthState, SpectralPrior};
use blast_linalg::{EigenBasis, ImageFrame};
use nalgebra::{DMatrix, DVector};

use crate::CliError;

/// Closed-form eigenbasis of `Q0 = G^2` for the symmetric cross stencil
/// `G = a1 I + sum of -1 axis neighbors` under zero padding.
///
/// Eigenvectors are products of sines,
/// `v_{kl}[i,j] = 2/sqrt((q1+1)(q2+1)) sin(ik pi/(q1+1)) sin(jl pi/(q2+1))`,
/// with eigenvalues `(a1 - 2 cos(k pi/(q1+1)) - 2 cos(l pi/(q2+1)))^2`.
pub fn sine_basis_prior(rows: usize, cols: usize, a1: f64) -> Result<SpectralPrior, CliError> {
    if a1 <= 4.0 {
        return Err(CliError::Input(format!(
            "need a1 > 4 for a positive definite stencil, got {a1}"
        )));
    }
    let p = rows * cols;
    let norm = 2.0 / (((rows + 1) * (cols + 1)) as f64).sqrt();
    let mut vectors = DMatrix::zeros(p, p);
    let mut values = DVector::zeros(p);
    let mut col = 0;
    for k in 1..=rows {
        let ck = (std::f64::consts::PI * k as f64 / (rows + 1) as f64).cos();
        for l in 1..=cols {
            let cl = (std::f64::consts::PI * l as f64 / (cols + 1) as f64).cos();
            let lambda = a1 - 2.0 * ck - 2.0 * cl;
            values[col] = lambda * lambda;
            for i in 0..rows {
                let si = ((i + 1) as f64 * k as f64 * std::f64::consts::PI
                    / (rows + 1) as f64)
                    .sin();
                for j in 0..cols {
                    let sj = ((j + 1) as f64 * l as f64 * std::f64::consts::PI
                        / (cols + 1) as f64)
                        .sin();
                    vectors[(i * cols + j, col)] = norm * si * sj;
                }
            }
            col += 1;
        }
    }
    let basis =
        EigenBasis::from_parts(vectors, values).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(SpectralPrior::from_basis(rows, cols, &basis, DVector::zeros(p), 1.0)?)
}

#[derive(Debug, Clone)]
pub struct BenchPoint {
    pub rows: usize,
    pub cols: usize,
    pub pixels: usize,
    pub setup: std::time::Duration,
    /// Mean wall time per engine step; `None` when `steps == 0`.
    pub per_step: Option<std::time::Duration>,
}

/// Times prior setup and per-step detection cost for one image size.
pub fn bench_size(
    rows: usize,
    cols: usize,
    steps: usize,
    truncation: Option<usize>,
) -> Result<BenchPoint, CliError> {
    let setup_start = Instant::now();
    let prior = sine_basis_prior(rows, cols, 4.5)?;
    let setup = setup_start.elapsed();

    let per_step = if steps == 0 {
        None
    } else {
        let mut state = RunLengthState::new(
            Arc::new(prior),
            Hazard::constant(20.0)?,
            Some(1.0),
            truncation,
        )?;
        // Deterministic pseudo-random frames; generation cost excluded.
        let mut seed = 0x00C0_FFEEu64 | 1;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let frames: Vec<ImageFrame<f64>> = (0..steps)
            .map(|_| ImageFrame::from_fn(rows, cols, |_, _| next()))
            .collect();
        let run_start = Instant::now();
        for frame in &frames {
            state.step(frame)?;
        }
        Some(run_start.elapsed() / steps as u32)
    };
    Ok(BenchPoint { rows, cols, pixels: rows * cols, setup, per_step })
}

/// Least-squares slope of `log(per-step time)` against `log(pixels)`.
pub fn log_log_slope(points: &[BenchPoint]) -> Option<f64> {
    let data: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|b| {
            b.per_step
                .map(|t| ((b.pixels as f64).ln(), t.as_secs_f64().ln()))
        })
        .collect();
    if data.len() < 2 {
        return None;
    }
    let n = data.len() as f64;
    let mean_x = data.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = data.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxy: f64 = data.iter().map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let sxx: f64 = data.iter().map(|(x, _)| (x - mean_x) * (x - mean_x)).sum();
    Some(sxy / sxx)
}
