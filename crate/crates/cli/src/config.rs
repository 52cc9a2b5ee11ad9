use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use halo_core::halocore::{Mode, ModelConfig, Precision};
use halo_core::recordkit::{BucketConfig, DEFAULT_MAX_VISITS};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Reads and validates a JSON config; unknown fields are rejected.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

pub fn read_or_default<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), |p| read_json(p))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Architecture without the data-dependent sizes, which `train` fills in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub n_emb: usize,
    pub n_heads: usize,
    pub n_blocks: usize,
    pub ff_mult: usize,
    pub n_masked_layers: usize,
    #[serde(default = "full")]
    pub mode: Mode,
    #[serde(default = "f32_precision")]
    pub precision: Precision,
    #[serde(default)]
    pub init_std: Option<f64>,
    #[serde(default)]
    pub vocab_size: Option<usize>,
    #[serde(default)]
    pub max_visits: Option<usize>,
}

fn full() -> Mode {
    Mode::Full
}

fn f32_precision() -> Precision {
    Precision::F32
}

impl ModelSpec {
    /// Presets leave `init_std` unset so callers pick the scale.
    fn from_config(c: ModelConfig) -> Self {
        ModelSpec {
            n_emb: c.n_emb,
            n_heads: c.n_heads,
            n_blocks: c.n_blocks,
            ff_mult: c.ff_mult,
            n_masked_layers: c.n_masked_layers,
            mode: c.mode,
            precision: c.precision,
            init_std: None,
            vocab_size: None,
            max_visits: None,
        }
    }

    /// `desk`, `tiny`, or a path to a JSON spec.
    pub fn load(arg: &str) -> Result<Self> {
        match arg {
            "desk" => Ok(Self::from_config(ModelConfig::desk(0, 0))),
            "tiny" => Ok(Self::from_config(ModelConfig::tiny(0, 0))),
            path => read_json(Path::new(path)),
        }
    }

    /// Completes the spec; explicit sizes must agree with the data.
    pub fn resolve(&self, vocab_size: usize, max_visits: usize) -> Result<ModelConfig> {
        for (name, given, actual) in [("vocab_size", self.vocab_size, vocab_size), ("max_visits", self.max_visits, max_visits)] {
            if let Some(g) = given.filter(|&g| g != actual) {
                bail!(crate::UsageError(format!("model spec {name} {g} disagrees with the data ({actual})")));
            }
        }
        let mut c = ModelConfig::desk(vocab_size, max_visits);
        c.n_emb = self.n_emb;
        c.n_heads = self.n_heads;
        c.n_blocks = self.n_blocks;
        c.ff_mult = self.ff_mult;
        c.n_masked_layers = self.n_masked_layers;
        c.mode = self.mode;
        c.precision = self.precision;
        if let Some(s) = self.init_std {
            c.init_std = s;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareConfig {
    pub buckets: BucketConfig,
    pub max_visits: usize,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig { buckets: BucketConfig::default(), max_visits: DEFAULT_MAX_VISITS }
    }
}

/// Written by `prepare` next to the splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub seed: u64,
    pub max_visits: usize,
    pub vocab_hash: String,
    pub vocab_size: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}
