use serde::{Deserialize, Serialize};

use crate::error::{HaloError, Result};
use crate::recordkit::FRAME_ROWS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Visit-level transformer followed by the masked code-level layers.
    Full,
    /// Visit-level transformer with a plain linear head; codes of a visit
    /// are conditionally independent given the history.
    CoarseOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_emb: usize,
    pub n_heads: usize,
    pub n_blocks: usize,
    pub ff_mult: usize,
    pub n_masked_layers: usize,
    pub vocab_size: usize,
    pub max_visits: usize,
    pub mode: Mode,
    #[serde(default = "default_precision")]
    pub precision: Precision,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
}

fn default_precision() -> Precision {
    Precision::F32
}

fn default_init_std() -> f64 {
    0.02
}

impl ModelConfig {
    /// Desk-scale defaults: 96-wide, 4 heads, 4 blocks, 2 masked layers.
    pub fn desk(vocab_size: usize, max_visits: usize) -> Self {
        ModelConfig {
            n_emb: 96,
            n_heads: 4,
            n_blocks: 4,
            ff_mult: 4,
            n_masked_layers: 2,
            vocab_size,
            max_visits,
            mode: Mode::Full,
            precision: Precision::F32,
            init_std: default_init_std(),
        }
    }

    /// A few thousand parameters; for exhaustive and finite-difference checks.
    pub fn tiny(vocab_size: usize, max_visits: usize) -> Self {
        ModelConfig {
            n_emb: 16,
            n_heads: 2,
            n_blocks: 2,
            ff_mult: 2,
            n_masked_layers: 2,
            vocab_size,
            max_visits,
            mode: Mode::Full,
            precision: Precision::F64,
            init_std: default_init_std(),
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn rows_max(&self) -> usize {
        self.max_visits + FRAME_ROWS
    }

    pub fn head_dim(&self) -> usize {
        self.n_emb / self.n_heads
    }

    pub fn ff_width(&self) -> usize {
        self.ff_mult * self.n_emb
    }

    /// Width of the code-level layers: history plus one column per code.
    pub fn fine_width(&self) -> usize {
        self.n_emb + self.vocab_size
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HaloError::Config(format!("model: {m}")));
        if self.n_emb == 0 || self.n_heads == 0 || self.n_emb % self.n_heads != 0 {
            return bad("n_emb must be a positive multiple of n_heads");
        }
        if self.n_blocks == 0 {
            return bad("n_blocks must be at least 1");
        }
        if self.n_masked_layers == 0 {
            return bad("n_masked_layers must be at least 1");
        }
        if self.ff_mult == 0 {
            return bad("ff_mult must be at least 1");
        }
        if self.vocab_size < 3 {
            return bad("vocab_size must be at least 3 (start, end and one code)");
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return bad("init_std must be finite and non-negative");
        }
        Ok(())
    }
}
