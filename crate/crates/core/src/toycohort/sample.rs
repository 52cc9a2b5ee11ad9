use rayon::prelude::*;

use super::params::ToyParams;
use crate::error::Result;
use crate::recordkit::{Record, Visit};
use crate::rng::{self, Rng};
use crate::scalar::sigmoid;

/// Draws one toy record. `params` must be valid.
pub fn sample_toy_record(params: &ToyParams, rng: &mut Rng) -> Record {
    let incoming = params.incoming();
    sample_with(params, &incoming, rng)
}

fn sample_with(params: &ToyParams, incoming: &[Vec<(usize, f64)>], rng: &mut Rng) -> Record {
    let n = params.n_codes;
    let labels: Vec<bool> = params.label_priors.iter().map(|&p| rng::bernoulli(rng, p)).collect();
    let mut context = params.base_logits.clone();
    for (l, _) in labels.iter().enumerate().filter(|(_, &on)| on) {
        for (i, c) in context.iter_mut().enumerate() {
            *c += params.label_weight(l, i);
        }
    }
    let mut record = Record::new("");
    record.labels = (0..params.n_labels).filter(|&l| labels[l]).map(|l| params.label_name(l)).collect();
    let mut prev = vec![false; n];
    for t in 0..params.max_visits {
        let mut current = vec![false; n];
        for i in 0..n {
            let mut logit = context[i];
            for j in (0..n).filter(|&j| prev[j]) {
                logit += params.visit_weight(j, i);
            }
            for &(f, w) in &incoming[i] {
                if current[f] {
                    logit += w;
                }
            }
            current[i] = rng::bernoulli(rng, sigmoid(logit));
        }
        let mut visit = Visit::with_codes((0..n).filter(|&i| current[i]).map(|i| params.code_name(i)));
        for lab in &params.labs {
            if rng::bernoulli(rng, lab.presence) {
                visit.labs.insert(lab.name.clone(), lab.low + (lab.high - lab.low) * rng::unit(rng));
            }
        }
        if t > 0 {
            if let Some(g) = params.gap_days {
                visit.gap_days = Some(g.low + (g.high - g.low) * rng::unit(rng));
            }
        }
        record.visits.push(visit);
        prev = current;
        if t + 1 == params.max_visits || !rng::bernoulli(rng, params.continuation) {
            break;
        }
    }
    record
}

/// `n` toy records, record `i` drawn from stream `i` of `seed` and named
/// `toy{i:06}`.
pub fn sample_toy_dataset(params: &ToyParams, n: usize, seed: u64) -> Result<Vec<Record>> {
    params.validate()?;
    let incoming = params.incoming();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = sample_with(params, &incoming, &mut rng::stream(seed, i as u64));
            r.patient_id = format!("toy{i:06}");
            r
        })
        .collect())
}
