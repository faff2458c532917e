use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// RMSProp hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RmsPropConfig {
    pub lr: f64,
    /// Smoothing constant of the squared-gradient average.
    pub rho: f64,
    pub eps: f64,
    /// Optional heavy-ball momentum on the normalized step (0 disables it).
    #[serde(default)]
    pub momentum: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            lr: 2e-5,
            rho: 0.9,
            eps: 1e-8,
            momentum: 0.0,
        }
    }
}

/// Per-parameter optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub mean_square: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl OptimState {
    pub fn new(n: usize) -> Self {
        OptimState {
            mean_square: vec![0.0; n],
            velocity: vec![0.0; n],
        }
    }
}

/// One RMSProp update:
/// `s <- rho s + (1 - rho) g^2`, `p <- p - lr g / (sqrt(s) + eps)`.
pub fn rmsprop_step(params: &mut [f64], grads: &[f64], state: &mut OptimState, config: &RmsPropConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.mean_square.len() {
        return Err(Error::mismatch(format!(
            "{} parameters, {} gradients, {} state entries",
            params.len(),
            grads.len(),
            state.mean_square.len()
        )));
    }
    let RmsPropConfig { lr, rho, eps, momentum } = *config;
    for i in 0..params.len() {
        let g = grads[i];
        let s = rho * state.mean_square[i] + (1.0 - rho) * g * g;
        state.mean_square[i] = s;
        let step = g / (s.sqrt() + eps);
        if momentum != 0.0 {
            let v = momentum * state.velocity[i] + step;
            state.velocity[i] = v;
            params[i] -= lr * v;
        } else {
            params[i] -= lr * step;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_only_decays_state() {
        let mut p = vec![1.5, -2.0];
        let mut st = OptimState::new(2);
        st.mean_square = vec![4.0, 1.0];
        rmsprop_step(&mut p, &[0.0, 0.0], &mut st, &RmsPropConfig::default()).unwrap();
        assert_eq!(p, vec![1.5, -2.0]);
        assert_eq!(st.mean_square, vec![3.6, 0.9]);
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = vec![0.0];
        let mut st = OptimState::new(1);
        let cfg = RmsPropConfig { lr: 1.0, ..Default::default() };
        rmsprop_step(&mut p, &[1.0], &mut st, &cfg).unwrap();
        let expect = -1.0 / (0.1f64.sqrt() + 1e-8);
        assert!((p[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn minimizes_a_parabola() {
        let mut p = vec![1.0];
        let mut st = OptimState::new(1);
        let cfg = RmsPropConfig { lr: 0.01, ..Default::default() };
        let mut prev = 1.0f64;
        for _ in 0..100 {
            let g = 2.0 * p[0];
            rmsprop_step(&mut p, &[g], &mut st, &cfg).unwrap();
            assert!(p[0].abs() < prev);
            prev = p[0].abs();
        }
        assert!(prev < 0.5);
    }

    #[test]
    fn shape_mismatch() {
        let mut st = OptimState::new(2);
        assert!(rmsprop_step(&mut [0.0; 2], &[0.0; 3], &mut st, &RmsPropConfig::default()).is_err());
    }
}
