//! Bias-corrected Adam.

use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    /// Step size.
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

/// Moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
            config,
        }
    }
}

/// Applies one Adam update in place.
///
/// Returns `false`, leaving both parameter and state untouched, when any
/// gradient entry is non-finite.
pub fn adam_update(param: &mut [f64], grad: &[f64], state: &mut AdamState) -> bool {
    assert_eq!(param.len(), grad.len(), "adam: gradient not aligned with parameter");
    assert_eq!(param.len(), state.m.len(), "adam: state not aligned with parameter");
    if grad.iter().any(|g| !g.is_finite()) {
        return false;
    }
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.step += 1;
    let bc1 = 1.0 - beta1.powi(state.step as i32);
    let bc2 = 1.0 - beta2.powi(state.step as i32);
    for ((p, &g), (m, v)) in param.iter_mut().zip(grad).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    true
}

/// Adam over every tensor of a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Adam {
    states: Vec<AdamState>,
    skipped: u64,
}

impl Adam {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        Self {
            states: params.iter().map(|p| AdamState::new(p.values.len(), config)).collect(),
            skipped: 0,
        }
    }

    /// Updates every parameter from gradients aligned with the store order.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) {
        assert_eq!(grads.len(), params.len(), "adam: one gradient per parameter");
        for ((p, g), s) in params.iter_mut().zip(grads).zip(&mut self.states) {
            if !adam_update(&mut p.values, g.values(), s) {
                self.skipped += 1;
                log::warn!("adam: non-finite gradient for {}; update skipped ({} so far)", p.name, self.skipped);
            }
        }
    }

    /// Number of per-parameter updates skipped for non-finite gradients.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    pub fn states(&self) -> &[AdamState] {
        &self.states
    }
}
