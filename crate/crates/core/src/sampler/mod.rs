//! Autoregressive generation of synthetic records.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::error::{HaloError, Result};
use crate::halocore::{FineWeights, HaloModel, Mode};
use crate::recordkit::{decode_matrix, CodeKind, Record, RecordMatrix, Vocabulary};
use crate::rng::{self, Rng};
use crate::scalar::{sigmoid, Scalar};
use crate::trainer::Checkpoint;

/// Draws records from a trained model over a fixed vocabulary.
pub struct Sampler<'a, T> {
    model: &'a HaloModel<T>,
    vocab: &'a Vocabulary,
    fine: FineWeights<T>,
    max_visits: usize,
}

/// Positions that a clinical row samples: medical, bucket and end codes.
fn sampled_in_visit(kind: CodeKind) -> bool {
    kind.is_clinical() || kind == CodeKind::End
}

impl<'a, T: Scalar> Sampler<'a, T> {
    /// `max_visits` caps clinical rows and may not exceed the model's.
    pub fn new(model: &'a HaloModel<T>, vocab: &'a Vocabulary, max_visits: usize) -> Result<Self> {
        if vocab.len() != model.config().vocab_size {
            return Err(HaloError::Shape(format!(
                "vocabulary of {} codes for a model of {}",
                vocab.len(),
                model.config().vocab_size
            )));
        }
        if max_visits > model.config().max_visits {
            return Err(HaloError::Config(format!(
                "max_visits {max_visits} exceeds the model's {}",
                model.config().max_visits
            )));
        }
        Ok(Sampler { model, vocab, fine: model.fine_weights(), max_visits })
    }

    /// Label columns for a condition; every id must be a label code.
    pub fn condition_columns(&self, labels: &BTreeSet<String>) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|id| {
                let c = self.vocab.column_of(id)?;
                if self.vocab.kind_at(c) != CodeKind::Label {
                    return Err(HaloError::UnknownCode(format!("{id} is not a label")));
                }
                Ok(c)
            })
            .collect()
    }

    /// Samples every column of the row after history row `t` for which
    /// `allowed(col)` holds, in column order; other columns stay 0.
    fn sample_row(&self, history: &[T], allowed: impl Fn(usize) -> bool, rng: &mut Rng) -> Vec<u8> {
        let n = self.vocab.len();
        let mut row = vec![0u8; n];
        let head = match self.model.config().mode {
            Mode::CoarseOnly => Some(self.model.head_logits(history)),
            Mode::Full => None,
        };
        for col in 0..n {
            if !allowed(col) {
                continue;
            }
            let z = match &head {
                Some(logits) => logits[col],
                None => self.model.code_logit(&self.fine, history, &row, col),
            };
            row[col] = rng::bernoulli(rng, sigmoid(z).as_f64()) as u8;
        }
        row
    }

    /// One record matrix. A `condition` fixes the label row to exactly
    /// those label columns; otherwise label columns are sampled.
    pub fn generate_matrix(&self, condition: Option<&[usize]>, rng: &mut Rng) -> Result<RecordMatrix> {
        let n = self.vocab.len();
        let kinds = self.vocab.kinds_by_column();
        let end = self.vocab.end_column();
        let mut rows: Vec<Vec<u8>> = Vec::with_capacity(self.max_visits + 3);
        let mut start = vec![0u8; n];
        start[self.vocab.start_column()] = 1;
        let mut trace = self.model.coarse_trace(&[&start])?;
        rows.push(start);

        let label_row = match condition {
            Some(cols) => {
                let mut row = vec![0u8; n];
                for &c in cols {
                    row[c] = 1;
                }
                row
            }
            None => self.sample_row(trace.history_row(0), |c| kinds[c] == CodeKind::Label, rng),
        };
        trace.extend(self.model, &[&label_row])?;
        rows.push(label_row);

        let mut ended = false;
        for v in 0..self.max_visits {
            let t = rows.len() - 1;
            let row = self.sample_row(trace.history_row(t), |c| sampled_in_visit(kinds[c]), rng);
            ended = row[end] == 1;
            if !ended && v + 1 < self.max_visits {
                trace.extend(self.model, &[&row])?;
            }
            rows.push(row);
            if ended {
                break;
            }
        }
        if !ended {
            let mut row = vec![0u8; n];
            row[end] = 1;
            rows.push(row);
        }
        let true_rows = rows.len();
        RecordMatrix::from_rows(rows, n, true_rows)
    }

    pub fn generate_record(&self, condition: Option<&[usize]>, rng: &mut Rng) -> Result<Record> {
        let m = self.generate_matrix(condition, rng)?;
        Ok(decode_matrix(&m, self.vocab, rng))
    }

    /// `log` probability that [`Self::generate_matrix`] returns `m`: the
    /// sum over every sampled position. A forced end row contributes
    /// nothing.
    pub fn generation_log_prob(&self, m: &RecordMatrix, conditioned: bool) -> Result<T> {
        let kinds = self.vocab.kinds_by_column();
        let end = self.vocab.end_column();
        let last = m.true_rows() - 1;
        let forced = last == self.max_visits + 2 && !(2..last).any(|t| m.get(t, end));
        self.model.log_prob_where(m, |t, c| match t {
            1 => !conditioned && kinds[c] == CodeKind::Label,
            t if t == last && forced => false,
            _ => sampled_in_visit(kinds[c]),
        })
    }

    /// `n` records; record `i` uses stream `i` of `seed` and is named
    /// `synth{i:06}`.
    pub fn generate_dataset(&self, n: usize, condition: Option<&BTreeSet<String>>, seed: u64) -> Result<Vec<Record>>
    where
        T: Sync,
    {
        if n == 0 {
            return Err(HaloError::Config("cannot generate an empty dataset".into()));
        }
        let cols = condition.map(|c| self.condition_columns(c)).transpose()?;
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut r = rng::stream(seed, i as u64);
                let mut rec = self.generate_record(cols.as_deref(), &mut r)?;
                rec.patient_id = format!("synth{i:06}");
                Ok(rec)
            })
            .collect()
    }
}

/// Generates from a checkpoint after checking it matches `vocab`.
pub fn generate_dataset(
    checkpoint: &Checkpoint,
    vocab: &Vocabulary,
    n: usize,
    condition: Option<&BTreeSet<String>>,
    seed: u64,
) -> Result<Vec<Record>> {
    checkpoint.check_vocab(vocab)?;
    let model = checkpoint.model::<f32>()?;
    let sampler = Sampler::new(&model, vocab, model.config().max_visits)?;
    sampler.generate_dataset(n, condition, seed)
}

/// Samples rows `1..n_rows` after `first_row`, drawing exactly the
/// positions where `free(t, col)` holds (others stay 0). The probability
/// of the result is `exp(log_prob_where(m, free))`.
pub fn sample_fixed_shape<T: Scalar>(
    model: &HaloModel<T>,
    first_row: &[u8],
    n_rows: usize,
    free: impl Fn(usize, usize) -> bool,
    rng: &mut Rng,
) -> Result<RecordMatrix> {
    let n = model.config().vocab_size;
    let fine = model.fine_weights();
    let mut trace = model.coarse_trace(&[first_row])?;
    let mut rows = vec![first_row.to_vec()];
    for t in 1..n_rows {
        let history = trace.history_row(t - 1);
        let head = (model.config().mode == Mode::CoarseOnly).then(|| model.head_logits(history));
        let mut row = vec![0u8; n];
        for col in (0..n).filter(|&c| free(t, c)) {
            let z = match &head {
                Some(l) => l[col],
                None => model.code_logit(&fine, history, &row, col),
            };
            row[col] = rng::bernoulli(rng, sigmoid(z).as_f64()) as u8;
        }
        if t + 1 < n_rows {
            trace.extend(model, &[&row])?;
        }
        rows.push(row);
    }
    RecordMatrix::from_rows(rows, n, n_rows)
}

#[cfg(test)]
mod tests;
