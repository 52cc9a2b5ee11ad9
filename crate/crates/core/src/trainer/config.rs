use serde::{Deserialize, Serialize};

use crate::error::{HaloError, Result};
use crate::numerics::AdamConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Validation loss is computed every `eval_every` epochs and after the
    /// last one.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lr: 1e-4, batch_size: 48, epochs: 50, seed: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8, eval_every: 1 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HaloError::Config(format!("training: {m}")));
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad("lr must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("Adam needs betas in [0, 1) and eps > 0");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }
}
