use nalgebra::{DMatrix, DVector};

use crate::{build_dense_operator, ImageFrame, LinalgError, LinearLayer, Scalar};

/// Composes the layer stack into the induced Gaussian prior:
/// `Q0 = G^T G` with `G = G_L ... G_1`, and `mu0 = -G^{-1} b` where
/// `b = g(0)` is the stack applied to the zero image.
///
/// `mu0` is the root of the affine map: `g(mu0) = 0`.
pub fn assemble_precision<S: Scalar>(
    layers: &[LinearLayer<S>],
    q1: usize,
    q2: usize,
) -> Result<(DMatrix<S>, DVector<S>), LinalgError> {
    if layers.is_empty() {
        return Err(LinalgError::InvalidInput("empty layer stack".into()));
    }
    for layer in layers {
        if layer.intercept.rows() != q1 || layer.intercept.cols() != q2 {
            return Err(LinalgError::DimensionMismatch {
                expected: format!("{q1}x{q2} intercept"),
                got: format!("{}x{}", layer.intercept.rows(), layer.intercept.cols()),
            });
        }
    }
    let p = q1 * q2;

    let mut g = DMatrix::<S>::identity(p, p);
    let mut b_img = ImageFrame::zeros(q1, q2);
    for layer in layers {
        g = build_dense_operator(&layer.filter, q1, q2)? * g;
        b_img = layer.apply(&b_img)?;
    }
    let b = b_img.to_vector();

    let lu = g.clone().lu();
    let mu0 = lu
        .solve(&(-&b))
        .ok_or_else(|| LinalgError::SingularOperator("composite operator G is singular".into()))?;

    let mut q0 = g.tr_mul(&g);
    // G^T G is symmetric up to rounding; make it exact for downstream
    // symmetry checks.
    for i in 0..p {
        for j in (i + 1)..p {
            let avg = (q0[(i, j)] + q0[(j, i)]) * S::from_config(0.5);
            q0[(i, j)] = avg;
            q0[(j, i)] = avg;
        }
    }
    Ok((q0, mu0))
}

/// Symmetric sparse matrix in compressed row storage. Holds the structural
/// nonzeros of a precision matrix; zero entries inside the stencil footprint
/// are kept out by exact comparison (zero padding produces exact zeros).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym<S: Scalar = f64> {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<S>,
}

impl<S: Scalar> SparseSym<S> {
    pub fn from_dense(m: &DMatrix<S>) -> Result<Self, LinalgError> {
        if !m.is_square() {
            return Err(LinalgError::InvalidInput("matrix not square".into()));
        }
        let dim = m.nrows();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..dim {
            for j in 0..dim {
                let v = m[(i, j)];
                if v != S::zero() {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { dim, row_ptr, col_idx, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn max_row_nnz(&self) -> usize {
        (0..self.dim).map(|i| self.row_nnz(i)).max().unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, S)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        range.clone().map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn to_dense(&self) -> DMatrix<S> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// `y = M x`.
    pub fn mul_vec(&self, x: &DVector<S>) -> DVector<S> {
        let mut y = DVector::zeros(self.dim);
        for i in 0..self.dim {
            let mut acc = S::zero();
            for (j, v) in self.row(i) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
        y
    }
}
