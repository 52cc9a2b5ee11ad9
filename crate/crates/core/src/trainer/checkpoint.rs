use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::error::{HaloError, Result};
use crate::halocore::{HaloModel, ModelConfig};
use crate::recordkit::Vocabulary;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"HALOCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub vocab_hash: String,
    pub train: TrainConfig,
    pub epoch: usize,
    pub val_loss: f64,
}

/// Model parameters with the metadata needed to reuse them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: Vec<f32>,
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &HaloModel<T>, vocab_hash: &str, train: TrainConfig, epoch: usize, val_loss: f64) -> Self {
        Checkpoint {
            meta: CheckpointMeta { model: model.config().clone(), vocab_hash: vocab_hash.to_string(), train, epoch, val_loss },
            params: model.params().iter().map(|p| p.as_f64() as f32).collect(),
        }
    }

    pub fn model<T: Scalar>(&self) -> Result<HaloModel<T>> {
        HaloModel::from_params(self.meta.model.clone(), self.params.iter().map(|&p| T::of(p as f64)).collect())
    }

    /// Fails unless the checkpoint was trained against `vocab`.
    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        let found = vocab.content_hash();
        if found != self.meta.vocab_hash {
            return Err(HaloError::HashMismatch { expected: self.meta.vocab_hash.clone(), found });
        }
        if vocab.len() != self.meta.model.vocab_size {
            return Err(HaloError::Checkpoint(format!(
                "vocabulary has {} codes, model expects {}",
                vocab.len(),
                self.meta.model.vocab_size
            )));
        }
        Ok(())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let meta = serde_json::to_vec(&self.meta)?;
        let meta_len = u32::try_from(meta.len()).map_err(|_| HaloError::Checkpoint("metadata too large".into()))?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&meta_len.to_le_bytes())?;
        w.write_all(&meta)?;
        let mut body = Vec::with_capacity(self.params.len() * 4);
        for p in &self.params {
            body.extend_from_slice(&p.to_le_bytes());
        }
        w.write_all(&body)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| HaloError::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported format version {version}")));
        }
        let meta_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let meta_end = 16usize.checked_add(meta_len).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated metadata"))?;
        let meta: CheckpointMeta = serde_json::from_slice(&bytes[16..meta_end])?;
        meta.model.validate()?;
        let body = &bytes[meta_end..];
        let expected = crate::halocore::Layout::new(&meta.model).total;
        if body.len() != expected * 4 {
            return Err(bad(&format!("{} parameter bytes, layout needs {}", body.len(), expected * 4)));
        }
        let params = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Checkpoint { meta, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
