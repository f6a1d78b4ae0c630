use serde::{Deserialize, Serialize};

use super::ParameterStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One bias-corrected Adam update; gradients are cleared afterwards.
pub fn adam_step(store: &mut ParameterStore, learning_rate: f64, config: &AdamConfig) {
    let t = store.step() + 1;
    store.set_step(t);
    let c1 = 1.0 - config.beta1.powi(t as i32);
    let c2 = 1.0 - config.beta2.powi(t as i32);
    for p in store.params_mut() {
        let g = p.grad.data();
        let m = p.m.data_mut();
        for (mi, gi) in m.iter_mut().zip(g) {
            *mi = config.beta1 * *mi + (1.0 - config.beta1) * gi;
        }
        let v = p.v.data_mut();
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi = config.beta2 * *vi + (1.0 - config.beta2) * gi * gi;
        }
        let (m, v) = (p.m.data(), p.v.data());
        for ((w, mi), vi) in p.value.data_mut().iter_mut().zip(m).zip(v) {
            let m_hat = mi / c1;
            let v_hat = vi / c2;
            *w -= learning_rate * m_hat / (v_hat.sqrt() + config.eps);
        }
        p.grad.fill(0.0);
    }
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_gradients(store: &mut ParameterStore, max_norm: f64) -> f64 {
    let norm = store.global_grad_norm();
    if norm > max_norm && norm > 0.0 {
        let factor = max_norm / norm;
        for p in store.params_mut() {
            p.grad.scale(factor);
        }
    }
    norm
}
