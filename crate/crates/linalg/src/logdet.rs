use nalgebra::DMatrix;

use crate::{build_dense_operator, ConvFilter, FilterKind, LinalgError, Scalar};

/// How to evaluate `log |det G|` for a stack of filter-induced operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogDetStrategy {
    /// LU factorization of each dense operator; O(p^3), the oracle.
    Dense,
    /// `seq` filters only: the operator is triangular, so
    /// `log |det G_l| = p log |a_{l,1}|`. O(1) per layer.
    Triangular,
    /// `plus` filters only: closed-form eigenvalues of the zero-padded
    /// operator. O(p) per layer.
    Spectral,
}

/// `log |det G|` for the composite operator `G = G_L ... G_1`, i.e. the sum
/// of per-layer log-determinant magnitudes.
pub fn log_det<S: Scalar>(
    filters: &[ConvFilter<S>],
    q1: usize,
    q2: usize,
    strategy: LogDetStrategy,
) -> Result<S, LinalgError> {
    if filters.is_empty() {
        return Err(LinalgError::InvalidInput("empty filter stack".into()));
    }
    let mut total = S::zero();
    for (l, filter) in filters.iter().enumerate() {
        let layer = match strategy {
            LogDetStrategy::Dense => {
                let g = build_dense_operator(filter, q1, q2)?;
                log_abs_det_dense(&g)?
            }
            LogDetStrategy::Triangular => log_det_triangular(filter, q1 * q2, l)?,
            LogDetStrategy::Spectral => log_det_spectral(filter, q1, q2, l)?,
        };
        total += layer;
    }
    Ok(total)
}

fn log_det_triangular<S: Scalar>(
    filter: &ConvFilter<S>,
    p: usize,
    layer: usize,
) -> Result<S, LinalgError> {
    if filter.kind() != FilterKind::Seq {
        return Err(LinalgError::InvalidInput(format!(
            "triangular log-det requires seq filters, layer {layer} is {:?}",
            filter.kind()
        )));
    }
    let a1 = filter.weights()[0];
    if a1 == S::zero() {
        return Err(LinalgError::SingularOperator(format!(
            "seq layer {layer} has a1 = 0"
        )));
    }
    Ok(S::from_usize(p).unwrap() * a1.abs().ln())
}

/// Closed-form spectrum of the zero-padded `plus` operator.
///
/// In raster order the operator is the Kronecker sum
/// `a1 I + I (x) T_h + T_v (x) I` of tridiagonal Toeplitz matrices, whose
/// eigenvalues combine additively:
///
/// ```text
/// lambda_{i,j} = a1 + 2 sqrt(a2 a4) cos(j pi / (q2+1))
///                   + 2 sqrt(a3 a5) cos(i pi / (q1+1))
/// ```
///
/// with square roots of negative products contributing imaginary parts, so
/// `log |det| = sum_ij log |lambda_ij|` over complex moduli.
fn log_det_spectral<S: Scalar>(
    filter: &ConvFilter<S>,
    q1: usize,
    q2: usize,
    layer: usize,
) -> Result<S, LinalgError> {
    if filter.kind() != FilterKind::Plus {
        return Err(LinalgError::InvalidInput(format!(
            "spectral log-det requires plus filters, layer {layer} is {:?}",
            filter.kind()
        )));
    }
    let [a1, a2, a3, a4, a5] = *filter.weights();
    let two = S::from_config(2.0);
    let ch = a2 * a4;
    let cv = a3 * a5;
    // (real, imaginary) contribution per axis.
    let split = |prod: S| -> (S, S) {
        if prod >= S::zero() {
            (two * prod.sqrt(), S::zero())
        } else {
            (S::zero(), two * (-prod).sqrt())
        }
    };
    let (h_re, h_im) = split(ch);
    let (v_re, v_im) = split(cv);

    let cosines = |m: usize| -> Vec<S> {
        let denom = S::from_usize(m + 1).unwrap();
        (1..=m)
            .map(|k| (S::pi() * S::from_usize(k).unwrap() / denom).cos())
            .collect()
    };
    let cos_v = cosines(q1);
    let cos_h = cosines(q2);

    let mut total = S::zero();
    let half = S::from_config(0.5);
    for &cv_i in &cos_v {
        for &ch_j in &cos_h {
            let re = a1 + h_re * ch_j + v_re * cv_i;
            let im = h_im * ch_j + v_im * cv_i;
            let sq = re * re + im * im;
            if sq == S::zero() {
                return Err(LinalgError::SingularOperator(format!(
                    "plus layer {layer} has a zero eigenvalue"
                )));
            }
            total += half * sq.ln();
        }
    }
    Ok(total)
}

/// `log |det M|` of a dense square matrix via LU.
pub fn log_abs_det_dense<S: Scalar>(m: &DMatrix<S>) -> Result<S, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::InvalidInput("matrix not square".into()));
    }
    let lu = m.clone().lu();
    let mut total = S::zero();
    let u = lu.u();
    for i in 0..u.nrows() {
        let d = u[(i, i)].abs();
        if d == S::zero() {
            return Err(LinalgError::SingularOperator(
                "zero pivot in LU factorization".into(),
            ));
        }
        total += d.ln();
    }
    Ok(total)
}
