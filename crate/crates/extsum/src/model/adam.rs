//! Adam optimizer with L2 weight decay and global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::param::{GradVector, ParamVector};

/// Optimizer hyperparameters. Defaults follow the training settings used
/// throughout: learning rate 5e-5, betas (0, 0.999), weight decay 1e-6,
/// clipping at global norm 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_stab: f64,
    pub weight_decay: f64,
    /// Global L2-norm clip threshold; values that are not finite and
    /// positive disable clipping.
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-5,
            beta1: 0.0,
            beta2: 0.999,
            eps_stab: 1e-8,
            weight_decay: 1e-6,
            clip_norm: 1.0,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub cfg: AdamConfig,
}

impl AdamState {
    pub fn new(n_params: usize, cfg: AdamConfig) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            cfg,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One ascent step on the objective whose gradient is `grad`.
///
/// Implemented as descent on the negation: the gradient is negated, the L2
/// weight-decay term `wd * theta` is added, the result is clipped at global
/// norm `clip_norm`, and a bias-corrected Adam update is applied.
pub fn adam_step(
    params: &mut ParamVector,
    grad: &GradVector,
    state: &mut AdamState,
) -> Result<()> {
    if grad.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::ShapeMismatch(format!(
            "params {} / grad {} / moments {}",
            params.len(),
            grad.len(),
            state.m.len()
        )));
    }
    if let Some(i) = grad.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient(i));
    }

    let cfg = state.cfg;
    let theta = params.values_mut();
    let mut descent: Vec<f64> = grad
        .values()
        .iter()
        .zip(theta.iter())
        .map(|(&g, &p)| -g + cfg.weight_decay * p)
        .collect();

    if cfg.clip_norm.is_finite() && cfg.clip_norm > 0.0 {
        let norm = descent.iter().map(|d| d * d).sum::<f64>().sqrt();
        if norm > cfg.clip_norm {
            let scale = cfg.clip_norm / norm;
            for d in &mut descent {
                *d *= scale;
            }
        }
    }

    state.t += 1;
    let bias1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bias2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for i in 0..theta.len() {
        let d = descent[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * d;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * d * d;
        let m_hat = state.m[i] / bias1;
        let v_hat = state.v[i] / bias2;
        theta[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps_stab);
    }
    Ok(())
}
