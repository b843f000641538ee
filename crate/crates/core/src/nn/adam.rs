use serde::{Deserialize, Serialize};

use super::param::Parameterized;
use super::NnError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// One bias-corrected Adam update over every block of `model`, then clears
/// the gradients. Nothing is modified if any gradient is non-finite.
pub fn adam_step<M: Parameterized + ?Sized>(model: &mut M, cfg: &AdamConfig) -> Result<(), NnError> {
    if !(cfg.lr > 0.0) {
        return Err(NnError::InvalidLearningRate(cfg.lr));
    }
    let mut bad = None;
    model.visit(&mut |b| {
        if bad.is_none() && b.grad.iter().any(|g| !g.is_finite()) {
            bad = Some(b.name.clone());
        }
    });
    if let Some(block) = bad {
        return Err(NnError::NonFiniteGradient { block });
    }
    model.visit_mut(&mut |b| {
        b.step_count += 1;
        let t = b.step_count as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for k in 0..b.values.len() {
            let g = b.grad[k];
            b.adam_m[k] = cfg.beta1 * b.adam_m[k] + (1.0 - cfg.beta1) * g;
            b.adam_v[k] = cfg.beta2 * b.adam_v[k] + (1.0 - cfg.beta2) * g * g;
            let m_hat = b.adam_m[k] / c1;
            let v_hat = b.adam_v[k] / c2;
            b.values[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            b.grad[k] = 0.0;
        }
    });
    Ok(())
}
