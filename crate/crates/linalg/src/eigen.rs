use nalgebra::{DMatrix, DVector};

use crate::{LinalgError, Scalar};

/// Relative floor applied to near-zero eigenvalues of a precision matrix.
const EIGENVALUE_FLOOR_REL: f64 = 1e-10;

/// One-shot spectral factorization `Q0 = P diag(D) P^T` of a symmetric
/// positive (semi-)definite precision matrix.
///
/// `P` is orthogonal, so `P^T` is used wherever an inverse of `P` is needed.
/// Eigenvalues below `1e-10 * max(D)` are clamped to that floor;
/// [`EigenBasis::clamped`] reports how many were, so callers can warn.
#[derive(Debug, Clone)]
pub struct EigenBasis<S: Scalar = f64> {
    vectors: DMatrix<S>,
    values: DVector<S>,
    clamped: usize,
}

impl<S: Scalar> EigenBasis<S> {
    /// Wraps an externally computed factorization. `vectors` must be
    /// orthogonal with eigenvalues matching column order.
    pub fn from_parts(vectors: DMatrix<S>, values: DVector<S>) -> Result<Self, LinalgError> {
        if !vectors.is_square() || vectors.nrows() != values.len() {
            return Err(LinalgError::DimensionMismatch {
                expected: format!("{0}x{0} vectors with {0} values", values.len()),
                got: format!("{}x{} / {}", vectors.nrows(), vectors.ncols(), values.len()),
            });
        }
        Ok(Self { vectors, values, clamped: 0 })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Eigenvalues, ascending.
    pub fn values(&self) -> &DVector<S> {
        &self.values
    }

    /// Orthogonal eigenvector matrix `P` (eigenvectors as columns).
    pub fn vectors(&self) -> &DMatrix<S> {
        &self.vectors
    }

    /// Number of eigenvalues clamped up to the positivity floor.
    pub fn clamped(&self) -> usize {
        self.clamped
    }

    /// `P^T x`: coordinates of `x` in the eigenbasis.
    pub fn project(&self, x: &DVector<S>) -> DVector<S> {
        self.vectors.tr_mul(x)
    }

    /// `P y`: back to pixel coordinates.
    pub fn unproject(&self, y: &DVector<S>) -> DVector<S> {
        &self.vectors * y
    }

    /// Rebuilds `P diag(D) P^T` (testing / diagnostics).
    pub fn reconstruct(&self) -> DMatrix<S> {
        let mut scaled = self.vectors.clone();
        for (mut col, &v) in scaled.column_iter_mut().zip(self.values.iter()) {
            col *= v;
        }
        scaled * self.vectors.transpose()
    }

    /// `sum_i log D_i`, the log-determinant of the factored matrix.
    pub fn log_det(&self) -> S {
        self.values.iter().fold(S::zero(), |acc, &v| acc + v.ln())
    }
}

/// Symmetric eigendecomposition with deterministic (ascending) eigenvalue
/// ordering.
///
/// The input must be symmetric to within `1e-10` (max-abs asymmetry).
/// Intended for positive semi-definite precisions: eigenvalues below the
/// relative floor are clamped so the factorization stays invertible.
pub fn symmetric_eigendecomposition<S: Scalar>(
    q: &DMatrix<S>,
) -> Result<EigenBasis<S>, LinalgError> {
    if !q.is_square() {
        return Err(LinalgError::InvalidInput("matrix not square".into()));
    }
    let tol = S::from_config(1e-10);
    let mut asym = S::zero();
    for i in 0..q.nrows() {
        for j in (i + 1)..q.ncols() {
            asym = asym.max((q[(i, j)] - q[(j, i)]).abs());
        }
    }
    if asym > tol {
        return Err(LinalgError::InvalidInput(format!(
            "matrix asymmetric by {asym:?} (tolerance 1e-10)"
        )));
    }

    let eig = nalgebra::SymmetricEigen::try_new(q.clone(), S::default_epsilon(), 0)
        .ok_or_else(|| LinalgError::Numeric("eigendecomposition did not converge".into()))?;

    // Deterministic ordering: ascending eigenvalues.
    let n = q.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());

    let mut vectors = DMatrix::zeros(n, n);
    let mut values = DVector::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
        values[dst] = eig.eigenvalues[src];
    }

    let max_val = values[n - 1].max(S::zero());
    let floor = S::from_config(EIGENVALUE_FLOOR_REL) * max_val;
    let mut clamped = 0;
    if floor > S::zero() {
        for v in values.iter_mut() {
            if *v < floor {
                *v = floor;
                clamped += 1;
            }
        }
    }

    Ok(EigenBasis { vectors, values, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{assemble_precision, ConvFilter, FilterKind, ImageFrame, LinearLayer};

    fn rng(seed: u64) -> impl FnMut() -> f64 {
        let mut state = seed | 1;
        move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        }
    }

    fn random_spd(p: usize, seed: u64) -> DMatrix<f64> {
        let mut next = rng(seed);
        let a = DMatrix::from_fn(p, p, |_, _| next());
        &a * a.transpose() + DMatrix::identity(p, p) * 0.5
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let basis = symmetric_eigendecomposition(&DMatrix::<f64>::identity(6, 6)).unwrap();
        assert!(basis.values().iter().all(|&v| (v - 1.0).abs() < 1e-12));
        let recon = basis.reconstruct();
        assert!((recon - DMatrix::<f64>::identity(6, 6)).amax() < 1e-10);
    }

    #[test]
    fn diagonal_matrix_recovers_entries() {
        let q = DMatrix::from_diagonal(&nalgebra::dvector![1.0f64, 4.0]);
        let basis = symmetric_eigendecomposition(&q).unwrap();
        assert!((basis.values()[0] - 1.0).abs() < 1e-12);
        assert!((basis.values()[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn reconstructs_random_spd_up_to_p_400() {
        for (p, seed) in [(20, 1u64), (100, 2), (400, 3)] {
            let q = random_spd(p, seed);
            let basis = symmetric_eigendecomposition(&q).unwrap();
            let rel = (basis.reconstruct() - &q).norm() / q.norm();
            assert!(rel < 1e-6, "p={p}: relative error {rel:.2e}");
            let orth = basis.vectors() * basis.vectors().transpose();
            assert!((orth - DMatrix::<f64>::identity(p, p)).amax() < 1e-8);
        }
    }

    #[test]
    fn reconstructs_seq_stack_precision() {
        let mut next = rng(11);
        let layers: Vec<LinearLayer<f64>> = (0..2)
            .map(|_| {
                LinearLayer::new(
                    ConvFilter::new(
                        FilterKind::Seq,
                        [1.0 + 0.3 * next(), next(), next(), next(), next()],
                    ),
                    ImageFrame::zeros(5, 4),
                )
            })
            .collect();
        let (q0, _) = assemble_precision(&layers, 5, 4).unwrap();
        let basis = symmetric_eigendecomposition(&q0).unwrap();
        let rel = (basis.reconstruct() - &q0).norm() / q0.norm();
        assert!(rel < 1e-6, "relative error {rel:.2e}");
        assert!(basis.values().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn rejects_asymmetric_input() {
        let mut q = DMatrix::<f64>::identity(4, 4);
        q[(0, 1)] = 1e-6;
        assert!(matches!(
            symmetric_eigendecomposition(&q),
            Err(LinalgError::InvalidInput(_))
        ));
    }

    #[test]
    fn clamps_semidefinite_spectrum() {
        // Rank-1 PSD matrix: p-1 zero eigenvalues get floored.
        let v = nalgebra::dvector![1.0f64, 2.0, 3.0];
        let q = &v * v.transpose();
        let basis = symmetric_eigendecomposition(&q).unwrap();
        assert_eq!(basis.clamped(), 2);
        assert!(basis.values().iter().all(|&x| x > 0.0));
    }

    #[test]
    fn projection_round_trip() {
        let q = random_spd(12, 5);
        let basis = symmetric_eigendecomposition(&q).unwrap();
        let mut next = rng(17);
        let x = DVector::from_fn(12, |_, _| next());
        let back = basis.unproject(&basis.project(&x));
        assert!((back - &x).amax() < 1e-10);
    }
}
