use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::tables::CodedDataset;
use crate::error::{HaloError, Result};
use crate::numerics::{bce_term, Adam, AdamConfig};
use crate::recordkit::{Record, Vocabulary};
use crate::rng;
use crate::scalar::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub lr: f64,
    pub max_steps: usize,
    /// Stop once the full-batch loss improves by less than this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { lr: 0.05, max_steps: 3000, tolerance: 1e-7, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub steps: usize,
}

/// Record-level presence vectors over `features` and the target flags.
fn pooled(records: &[Record], vocab: Option<&Vocabulary>, features: &HashMap<String, usize>, label: &str) -> (Vec<Vec<usize>>, Vec<bool>) {
    let data = CodedDataset::from_records(records, vocab);
    let xs = (0..data.len())
        .map(|i| {
            let mut on: Vec<usize> = data
                .visits(i)
                .iter()
                .flatten()
                .filter_map(|&c| features.get(&data.names()[c as usize]).copied())
                .collect();
            on.sort_unstable();
            on.dedup();
            on
        })
        .collect();
    let ys = records.iter().map(|r| r.labels.contains(label)).collect();
    (xs, ys)
}

/// Indices with equal positive and negative counts, the majority class
/// subsampled without replacement.
fn balanced(ys: &[bool], rng: &mut rng::Rng, what: &str) -> Result<Vec<usize>> {
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) = (0..ys.len()).partition(|&i| ys[i]);
    if pos.is_empty() || neg.is_empty() {
        return Err(HaloError::InsufficientData(format!("{what} set lacks one class of the target label")));
    }
    rng::shuffle(&mut pos, rng);
    rng::shuffle(&mut neg, rng);
    let k = pos.len().min(neg.len());
    let mut idx: Vec<usize> = pos[..k].iter().chain(&neg[..k]).copied().collect();
    idx.sort_unstable();
    Ok(idx)
}

fn logit(w: &[f64], x: &[usize]) -> f64 {
    w[w.len() - 1] + x.iter().map(|&j| w[j]).sum::<f64>()
}

/// Logistic regression on pooled codes: trained on `train`, scored on
/// `test`, both class-balanced by subsampling.
pub fn utility_probe(
    train: &[Record],
    test: &[Record],
    vocab: Option<&Vocabulary>,
    label: &str,
    config: &ProbeConfig,
) -> Result<ProbeMetrics> {
    let names = CodedDataset::from_records(train, vocab).names().to_vec();
    let features: HashMap<String, usize> = names.into_iter().enumerate().map(|(i, n)| (n, i)).collect();
    let d = features.len();
    let (xs, ys) = pooled(train, vocab, &features, label);
    let (xt, yt) = pooled(test, vocab, &features, label);
    let mut r = rng::seeded(config.seed);
    let tr = balanced(&ys, &mut r, "training")?;
    let te = balanced(&yt, &mut r, "test")?;

    let mut w = vec![0.0f64; d + 1];
    let mut adam = Adam::new(AdamConfig::with_lr(config.lr), d + 1);
    let n = tr.len() as f64;
    let mut prev = f64::INFINITY;
    let mut steps = 0;
    while steps < config.max_steps {
        let mut grad = vec![0.0; d + 1];
        let mut loss = 0.0;
        for &i in &tr {
            let z = logit(&w, &xs[i]);
            let y = if ys[i] { 1.0 } else { 0.0 };
            loss += bce_term(z, y);
            let g = (sigmoid(z) - y) / n;
            for &j in &xs[i] {
                grad[j] += g;
            }
            grad[d] += g;
        }
        loss /= n;
        adam.step(&mut w, &grad)?;
        steps += 1;
        if (prev - loss).abs() < config.tolerance {
            break;
        }
        prev = loss;
    }

    let (mut tp, mut fp, mut fneg, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for &i in &te {
        let pred = logit(&w, &xt[i]) > 0.0;
        match (pred, yt[i]) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
        correct += (pred == yt[i]) as usize;
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let (precision, recall) = (ratio(tp, tp + fp), ratio(tp, tp + fneg));
    Ok(ProbeMetrics {
        accuracy: ratio(correct, te.len()),
        precision,
        recall,
        f1: ratio(2 * tp, 2 * tp + fp + fneg),
        n_train: tr.len(),
        n_test: te.len(),
        steps,
    })
}
