use serde::{Deserialize, Serialize};

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators for a list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: &[usize]) -> Self {
        Self {
            config,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn for_params(config: AdamConfig, params: &[&mut [f64]]) -> Self {
        let shapes: Vec<usize> = params.iter().map(|p| p.len()).collect();
        Self::new(config, &shapes)
    }
}

/// One bias-corrected Adam update. Parameters are left untouched when a
/// gradient is non-finite or a shape disagrees.
pub fn adam_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut AdamState,
    lr: f64,
) -> Result<(), NnError> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(NnError::ShapeMismatch {
            context: "adam tensor count",
            expected: state.first.len(),
            found: params.len().max(grads.len()),
        });
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.first) {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(NnError::ShapeMismatch {
                context: "adam tensor length",
                expected: m.len(),
                found: if p.len() != m.len() { p.len() } else { g.len() },
            });
        }
    }
    if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(NnError::NonFiniteGradient);
    }

    state.step += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let correction1 = 1.0 - beta1.powi(t);
    let correction2 = 1.0 - beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let g = grads[i];
        let m = &mut state.first[i];
        let v = &mut state.second[i];
        for j in 0..p.len() {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            let m_hat = m[j] / correction1;
            let v_hat = v[j] / correction2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Step decay: `base_lr · decay_factor^floor(epoch / decay_every)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub decay_factor: f64,
    /// Epochs between decays; 0 disables decay.
    pub decay_every: u32,
}

impl LrSchedule {
    pub fn lr_at(&self, epoch: u32) -> f64 {
        if self.decay_every == 0 {
            return self.base_lr;
        }
        self.base_lr * self.decay_factor.powi((epoch / self.decay_every) as i32)
    }
}
