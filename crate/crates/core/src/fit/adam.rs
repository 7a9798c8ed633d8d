use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    check_dim("adam gradient", params.len(), grads.len())?;
    check_dim("adam state", params.len(), state.m.len())?;
    check_finite("adam gradient", grads)?;
    state.t += 1;
    let c1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let c2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_but_counts_the_step() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, &AdamConfig::default()).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_the_sign() {
        let cfg = AdamConfig::default();
        for g in [3.0, -0.5, 250.0] {
            let mut p = vec![0.0];
            let mut s = AdamState::new(1);
            adam_step(&mut p, &[g], &mut s, &cfg).unwrap();
            // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
            let expect = -cfg.lr * g / (g.abs() + cfg.eps);
            assert!((p[0] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn first_step_is_scale_consistent() {
        let cfg = AdamConfig::default();
        let step = |g: f64| {
            let mut p = vec![0.0];
            adam_step(&mut p, &[g], &mut AdamState::new(1), &cfg).unwrap();
            p[0]
        };
        let base = step(0.7);
        for c in [0.1, 3.0, 1e4] {
            assert!((step(0.7 * c) - base).abs() < 1e-8);
        }
    }

    #[test]
    fn converges_on_a_quadratic() {
        let cfg = AdamConfig::default();
        let mut x = vec![0.0];
        let mut s = AdamState::new(1);
        for _ in 0..5000 {
            let g = 2.0 * (x[0] - 3.0);
            adam_step(&mut x, &[g], &mut s, &cfg).unwrap();
        }
        assert!((x[0] - 3.0).abs() < 1e-2, "{}", x[0]);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = vec![0.0, 0.0];
        let err = adam_step(&mut p, &[0.0, f64::NAN], &mut AdamState::new(2), &AdamConfig::default());
        assert!(err.is_err());
        assert!(adam_step(&mut p, &[0.0], &mut AdamState::new(2), &AdamConfig::default()).is_err());
    }
}
