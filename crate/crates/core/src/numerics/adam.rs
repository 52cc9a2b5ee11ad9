use serde::{Deserialize, Serialize};

use crate::error::{HaloError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, beta1: default_beta1(), beta2: default_beta2(), eps: default_eps() }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    m: Vec<T>,
    v: Vec<T>,
    step: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        Adam { config, m: vec![T::zero(); n_params], v: vec![T::zero(); n_params], step: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. A non-finite gradient is rejected before any
    /// state changes.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(HaloError::Shape("adam: parameter count changed".into()));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(HaloError::NonFinite(format!("gradient entry {i}")));
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let bc1 = T::of(1.0 - c.beta1.powi(self.step.min(i32::MAX as u64) as i32));
        let bc2 = T::of(1.0 - c.beta2.powi(self.step.min(i32::MAX as u64) as i32));
        let (lr, eps) = (T::of(c.lr), T::of(c.eps));
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= lr * mh / (vh.sqrt() + eps);
        }
        Ok(())
    }
}
