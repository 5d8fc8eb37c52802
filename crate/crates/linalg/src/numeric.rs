use crate::Scalar;

/// `log(exp(a) + exp(b))` without overflow.
#[inline]
pub fn log_sum_exp_pair<S: Scalar>(a: S, b: S) -> S {
    let neg_inf = S::from_config(f64::NEG_INFINITY);
    if a == neg_inf && b == neg_inf {
        return neg_inf;
    }
    if a > b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// `log sum_i exp(x_i)` via max shifting. Empty input yields `-inf`.
pub fn log_sum_exp<S: Scalar>(xs: &[S]) -> S {
    let neg_inf = S::from_config(f64::NEG_INFINITY);
    let m = xs.iter().fold(neg_inf, |acc, &x| acc.max(x));
    if m == neg_inf {
        return neg_inf;
    }
    let sum = xs.iter().fold(S::zero(), |acc, &x| acc + (x - m).exp());
    m + sum.ln()
}
