use nalgebra::DVector;

use crate::DgmrfError;

/// Adam hyperparameters. Defaults: lr 0.01, beta1 0.9, beta2 0.999, eps 1e-8.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First-order moment-tracking optimizer with bias correction
/// (minimization convention: pass the negated gradient to ascend).
#[derive(Debug, Clone)]
pub struct AdamOptimizer {
    config: AdamConfig,
    m: DVector<f64>,
    v: DVector<f64>,
    t: u64,
}

impl AdamOptimizer {
    pub fn new(dim: usize, config: AdamConfig) -> Self {
        Self { config, m: DVector::zeros(dim), v: DVector::zeros(dim), t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One in-place update of `params` from `gradient`. A non-finite
    /// gradient halts the optimizer with a numeric error.
    pub fn step(
        &mut self,
        params: &mut DVector<f64>,
        gradient: &DVector<f64>,
    ) -> Result<(), DgmrfError> {
        if params.len() != self.m.len() || gradient.len() != self.m.len() {
            return Err(DgmrfError::InvalidInput(format!(
                "optimizer dimension {} does not match parameters {} / gradient {}",
                self.m.len(),
                params.len(),
                gradient.len()
            )));
        }
        if gradient.iter().any(|g| !g.is_finite()) {
            return Err(DgmrfError::Numeric(format!(
                "non-finite gradient at step {}",
                self.t + 1
            )));
        }
        self.t += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = gradient[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let snapshot = params.clone();
        let mut opt = AdamOptimizer::new(3, AdamConfig::default());
        for _ in 0..10 {
            opt.step(&mut params, &DVector::zeros(3)).unwrap();
        }
        assert_eq!(params, snapshot);
    }

    #[test]
    fn single_step_from_zero_moments_is_signed_unit_step() {
        // After bias correction, m_hat = g and v_hat = g^2, so the update is
        // -lr * g / (|g| + eps): essentially -lr * sign(g).
        let cfg = AdamConfig::default();
        let g = DVector::from_vec(vec![0.3, -7.0, 1e-4]);
        let mut params = DVector::zeros(3);
        let mut opt = AdamOptimizer::new(3, cfg);
        opt.step(&mut params, &g).unwrap();
        for i in 0..3 {
            let expect = -cfg.learning_rate * g[i] / (g[i].abs() + cfg.epsilon);
            assert!((params[i] - expect).abs() < 1e-12, "coord {i}");
        }
    }

    #[test]
    fn converges_on_quadratic_bowl() {
        // f(x) = ||x||^2, gradient 2x; 2000 steps from all-ones.
        let mut x = DVector::from_element(8, 1.0);
        let mut opt = AdamOptimizer::new(8, AdamConfig::default());
        for _ in 0..2000 {
            let grad = x.map(|v| 2.0 * v);
            opt.step(&mut x, &grad).unwrap();
        }
        assert!(x.norm() < 1e-3, "norm {}", x.norm());
    }

    #[test]
    fn nan_gradient_halts() {
        let mut params = DVector::zeros(2);
        let mut opt = AdamOptimizer::new(2, AdamConfig::default());
        let bad = DVector::from_vec(vec![1.0, f64::NAN]);
        assert!(matches!(
            opt.step(&mut params, &bad),
            Err(DgmrfError::Numeric(_))
        ));
    }
}
