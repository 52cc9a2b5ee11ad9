use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HaloError, Result};
use crate::halocore::HaloModel;
use crate::numerics::bce_term;
use crate::recordkit::RecordMatrix;
use crate::scalar::{sigmoid, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestMetrics {
    pub bce_loss: f64,
    /// Micro-averaged over every unmasked position, threshold 0.5.
    pub f1: f64,
    pub pp_per_code: f64,
    pub n_records: usize,
    /// Ones over unmasked positions, the perplexity normalizer.
    pub n_present: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    bce: f64,
    log_prob: f64,
    terms: usize,
    ones: usize,
    tp: usize,
    fp: usize,
    fn_: usize,
}

fn tally<T: Scalar>(model: &HaloModel<T>, m: &RecordMatrix) -> Result<Tally> {
    let m = m.trimmed();
    let logits = model.logits(&m)?;
    let mut out = Tally::default();
    for t in 0..logits.rows() {
        for (i, &bit) in m.row(t + 1).iter().enumerate() {
            let z = logits.get(t, i);
            let y = if bit != 0 { T::one() } else { T::zero() };
            let term = bce_term(z, y).as_f64();
            out.bce += term;
            out.log_prob -= term;
            out.terms += 1;
            let predicted = sigmoid(z).as_f64() >= 0.5;
            match (predicted, bit != 0) {
                (true, true) => out.tp += 1,
                (true, false) => out.fp += 1,
                (false, true) => out.fn_ += 1,
                _ => {}
            }
            out.ones += (bit != 0) as usize;
        }
    }
    Ok(out)
}

/// Mean BCE, micro-F1 and perplexity per present code on a test set.
pub fn evaluate_test<T: Scalar>(model: &HaloModel<T>, test: &[RecordMatrix]) -> Result<TestMetrics> {
    if test.is_empty() {
        return Err(HaloError::InsufficientData("empty test set".into()));
    }
    let parts: Vec<Result<Tally>> = test.par_iter().map(|m| tally(model, m)).collect();
    let mut total = Tally::default();
    let mut log_probs = Vec::with_capacity(test.len());
    for p in parts {
        let p = p?;
        total.bce += p.bce;
        total.terms += p.terms;
        total.ones += p.ones;
        total.tp += p.tp;
        total.fp += p.fp;
        total.fn_ += p.fn_;
        log_probs.push(p.log_prob);
    }
    let pp_per_code = perplexity_per_code(&log_probs, total.ones)?;
    let f1 = 2.0 * total.tp as f64 / (2 * total.tp + total.fp + total.fn_) as f64;
    Ok(TestMetrics {
        bce_loss: total.bce / total.terms as f64,
        f1,
        pp_per_code,
        n_records: test.len(),
        n_present: total.ones,
    })
}

/// `exp(−Σ log P(R) / N)`: the log-sum form.
pub fn perplexity_per_code(log_probs: &[f64], n_present: usize) -> Result<f64> {
    if n_present == 0 {
        return Err(HaloError::InsufficientData("no present codes to normalize perplexity".into()));
    }
    Ok((-log_probs.iter().sum::<f64>() / n_present as f64).exp())
}

/// `(Π 1/P(R))^(1/N)`: the root-of-reciprocals form, taken one record
/// at a time so the product stays representable.
pub fn perplexity_root_form(probs: &[f64], n_present: usize) -> Result<f64> {
    if n_present == 0 {
        return Err(HaloError::InsufficientData("no present codes to normalize perplexity".into()));
    }
    let n = n_present as f64;
    Ok(probs.iter().map(|p| (1.0 / p).powf(1.0 / n)).product())
}
