use serde::{Deserialize, Serialize};

use super::params::ParameterStore;
use crate::error::{Error, Result};

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
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update using the gradients currently held in `params`.
///
/// `t` is the 1-based step number. Moments are kept inside the store so they
/// persist across calls and travel with checkpoints. Gradients are checked for
/// finiteness before any value is touched.
pub fn adam_step(params: &mut ParameterStore, cfg: &AdamConfig, t: u64) -> Result<()> {
    if t == 0 {
        return Err(Error::invalid("adam step count starts at 1"));
    }
    if let Some(bad) = params.iter().find(|p| !p.grad.is_finite()) {
        return Err(Error::NonFiniteGradient(bad.name.clone()));
    }
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for p in params.iter_mut() {
        let values = p.value.values_mut();
        let grads = p.grad.values();
        for i in 0..values.len() {
            let g = grads[i];
            let m = cfg.beta1 * p.first_moment[i] + (1.0 - cfg.beta1) * g;
            let v = cfg.beta2 * p.second_moment[i] + (1.0 - cfg.beta2) * g * g;
            p.first_moment[i] = m;
            p.second_moment[i] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            values[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    params.step = t;
    Ok(())
}
