use blast_linalg::ImageFrame;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::SimgenError;

/// Matern-type lattice GMRF with precision
/// `zeta^2 ((kappa^2 I + G)^gamma)^T ((kappa^2 I + G)^gamma)`,
/// where `G` is the 4-neighbor lattice graph Laplacian (degree on the
/// diagonal, -1 for neighbors). `kappa` is an inverse length scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternSpec {
    pub kappa: f64,
    pub zeta: f64,
    pub gamma_exp: u32,
    pub rows: usize,
    pub cols: usize,
}

impl MaternSpec {
    pub fn new(kappa: f64, zeta: f64, gamma_exp: u32, rows: usize, cols: usize) -> Self {
        Self { kappa, zeta, gamma_exp, rows, cols }
    }

    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    /// Assembles the dense precision matrix.
    pub fn precision(&self) -> Result<DMatrix<f64>, SimgenError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(SimgenError::InvalidInput("empty lattice".into()));
        }
        if !(self.kappa > 0.0) || !(self.zeta > 0.0) || self.gamma_exp == 0 {
            return Err(SimgenError::InvalidInput(
                "kappa, zeta must be positive and gamma >= 1".into(),
            ));
        }
        let p = self.pixels();
        let mut base = lattice_laplacian(self.rows, self.cols);
        for i in 0..p {
            base[(i, i)] += self.kappa * self.kappa;
        }
        let mut powered = base.clone();
        for _ in 1..self.gamma_exp {
            powered = &powered * &base;
        }
        let mut q = powered.tr_mul(&powered) * (self.zeta * self.zeta);
        // Symmetrize rounding noise so the Cholesky sees an exact SPD input.
        for i in 0..p {
            for j in (i + 1)..p {
                let avg = 0.5 * (q[(i, j)] + q[(j, i)]);
                q[(i, j)] = avg;
                q[(j, i)] = avg;
            }
        }
        Ok(q)
    }
}

/// 4-neighbor lattice graph Laplacian on a `rows x cols` grid, raster order.
fn lattice_laplacian(rows: usize, cols: usize) -> DMatrix<f64> {
    let p = rows * cols;
    let mut g = DMatrix::zeros(p, p);
    let idx = |i: usize, j: usize| i * cols + j;
    for i in 0..rows {
        for j in 0..cols {
            let a = idx(i, j);
            let mut degree = 0.0;
            let mut neighbors = Vec::with_capacity(4);
            if i > 0 {
                neighbors.push(idx(i - 1, j));
            }
            if i + 1 < rows {
                neighbors.push(idx(i + 1, j));
            }
            if j > 0 {
                neighbors.push(idx(i, j - 1));
            }
            if j + 1 < cols {
                neighbors.push(idx(i, j + 1));
            }
            for b in neighbors {
                g[(a, b)] = -1.0;
                degree += 1.0;
            }
            g[(a, a)] = degree;
        }
    }
    g
}

/// Reusable sampler: the precision is factorized once, each draw is one
/// O(p^2) back-substitution.
#[derive(Debug, Clone)]
pub struct MaternSampler {
    rows: usize,
    cols: usize,
    factor_t: nalgebra::DMatrix<f64>, // L^T from Q = L L^T
}

impl MaternSampler {
    pub fn new(spec: &MaternSpec) -> Result<Self, SimgenError> {
        let q = spec.precision()?;
        let chol = q.cholesky().ok_or_else(|| {
            SimgenError::Numeric("Matern precision is not positive definite".into())
        })?;
        Ok(Self { rows: spec.rows, cols: spec.cols, factor_t: chol.l().transpose() })
    }

    /// Root-mean marginal standard deviation, `sqrt(tr(Q^{-1}) / p)`: the
    /// field's typical pixel scale, used to standardize scenario layers.
    pub fn mean_marginal_std(&self) -> f64 {
        // Q^{-1} = L^{-T} L^{-1}; tr(Q^{-1}) = ||L^{-T}||_F^2.
        let p = self.rows * self.cols;
        let inv = self
            .factor_t
            .solve_upper_triangular(&nalgebra::DMatrix::identity(p, p))
            .expect("factor is triangular and nonsingular");
        (inv.norm_squared() / p as f64).sqrt()
    }

    /// Draws `z ~ N(0, Q^{-1})` by back-substituting a standard normal
    /// vector through the Cholesky factor: `Q = L L^T`, `x = L^{-T} eps`.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Result<ImageFrame<f64>, SimgenError> {
        let p = self.rows * self.cols;
        let eps = DVector::from_fn(p, |_, _| StandardNormal.sample(rng));
        self.transform(&eps)
    }

    /// Back-substitutes a given standard-normal vector. Feeding one vector
    /// through two samplers yields coupled fields differing only in their
    /// correlation structure.
    pub fn transform(&self, eps: &DVector<f64>) -> Result<ImageFrame<f64>, SimgenError> {
        let x = self
            .factor_t
            .solve_upper_triangular(eps)
            .ok_or_else(|| SimgenError::Numeric("triangular solve failed".into()))?;
        Ok(ImageFrame::from_vector(self.rows, self.cols, &x)?)
    }
}

/// One-shot draw, deterministic per seed.
pub fn sample_matern(spec: &MaternSpec, seed: u64) -> Result<ImageFrame<f64>, SimgenError> {
    let sampler = MaternSampler::new(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sampler.sample(&mut rng)
}
