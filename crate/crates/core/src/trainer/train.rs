use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use crate::error::{HaloError, Result};
use crate::halocore::{HaloModel, ModelConfig};
use crate::numerics::Adam;
use crate::recordkit::RecordMatrix;
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// NaN when validation was skipped this epoch.
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot with the lowest validation loss.
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
    /// Validation loss of the freshly initialized model.
    pub initial_val_loss: f64,
}

/// Trains a fresh model, keeping the parameters with the lowest
/// validation loss. Batches follow a seeded shuffle per epoch; the last
/// partial batch is kept.
pub fn train<T: Scalar>(
    train_set: &[RecordMatrix],
    val_set: &[RecordMatrix],
    config: &TrainConfig,
    model_config: ModelConfig,
    vocab_hash: &str,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(HaloError::InsufficientData("training needs non-empty train and validation sets".into()));
    }
    let mut model = HaloModel::<T>::new(model_config, config.seed)?;
    let mut adam = Adam::new(config.adam(), model.n_params());
    let mut shuffle_rng = rng::stream(config.seed, 1);
    let initial_val_loss = model.training_loss(val_set)?.as_f64();
    let mut best: Option<Checkpoint> = None;
    let mut log = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.epochs {
        rng::shuffle(&mut order, &mut shuffle_rng);
        let mut weighted = 0.0;
        let mut seen = 0usize;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&RecordMatrix> = idx.iter().map(|&i| &train_set[i]).collect();
            let (loss, grad) = model.loss_and_grad(&batch)?;
            if !loss.is_finite() {
                return Err(HaloError::NonFinite(format!("epoch {epoch} batch {b}: training loss is {loss}")));
            }
            adam.step(model.params_mut(), &grad).map_err(|e| match e {
                HaloError::NonFinite(m) => HaloError::NonFinite(format!("epoch {epoch} batch {b}: {m}")),
                other => other,
            })?;
            weighted += loss.as_f64() * idx.len() as f64;
            seen += idx.len();
        }
        let val_loss = if epoch % config.eval_every == 0 || epoch == config.epochs {
            let v = model.training_loss(val_set)?.as_f64();
            if !v.is_finite() {
                return Err(HaloError::NonFinite(format!("epoch {epoch}: validation loss is {v}")));
            }
            v
        } else {
            f64::NAN
        };
        if !val_loss.is_nan() && best.as_ref().map_or(true, |c| val_loss < c.meta.val_loss) {
            best = Some(Checkpoint::from_model(&model, vocab_hash, config.clone(), epoch, val_loss));
        }
        let row = EpochLog { epoch, train_loss: weighted / seen as f64, val_loss };
        on_epoch(&row);
        log.push(row);
    }
    Ok(TrainOutcome { checkpoint: best.expect("the last epoch is always evaluated"), log, initial_val_loss })
}

/// Writes `epoch,train_loss,val_loss` rows.
pub fn write_training_log(log: &[EpochLog], path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "epoch,train_loss,val_loss")?;
    for row in log {
        writeln!(w, "{},{},{}", row.epoch, row.train_loss, row.val_loss)?;
    }
    w.flush()?;
    Ok(())
}
