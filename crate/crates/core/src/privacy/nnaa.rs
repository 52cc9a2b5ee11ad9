use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distance::{check_columns, nearest, BitSet};
use crate::error::{HaloError, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NnaaReport {
    pub nnaa: f64,
    pub aa_es: f64,
    pub aa_ts: f64,
    pub n: usize,
}

/// Fraction of `a` whose nearest record in `b` is strictly farther than
/// its nearest other record in `a`.
fn one_sided(a: &[&BitSet], b: &[&BitSet]) -> f64 {
    let hits: usize = (0..a.len())
        .into_par_iter()
        .map(|i| {
            let d_ab = nearest(a[i], b, None).expect("non-empty").0;
            let d_aa = nearest(a[i], a, Some(i)).expect("n ≥ 2").0;
            (d_ab > d_aa) as usize
        })
        .sum();
    hits as f64 / a.len() as f64
}

fn adversarial_accuracy(x: &[&BitSet], s: &[&BitSet]) -> f64 {
    0.5 * (one_sided(x, s) + one_sided(s, x))
}

fn pick(set: &[BitSet], n: usize, seed: u64, stream: u64) -> Vec<&BitSet> {
    let mut r = rng::stream(seed, stream);
    sample(&mut r, set.len(), n).into_iter().map(|i| &set[i]).collect()
}

/// `AA_ES − AA_TS` over seeded subsets of `n` records each. The training
/// and synthetic subsets share one index draw, so a synthetic set that
/// copies the training set stays aligned with it.
pub fn nnaa_risk(train: &[BitSet], synthetic: &[BitSet], eval: &[BitSet], n: usize, seed: u64) -> Result<NnaaReport> {
    if n < 2 {
        return Err(HaloError::Config("nnaa needs n ≥ 2".into()));
    }
    for (name, set) in [("training", train), ("synthetic", synthetic), ("evaluation", eval)] {
        if set.len() < n {
            return Err(HaloError::InsufficientData(format!("{name} set has {} records, need {n}", set.len())));
        }
    }
    check_columns(&[train, synthetic, eval])?;
    let (t, s, e) = (pick(train, n, seed, 0), pick(synthetic, n, seed, 0), pick(eval, n, seed, 1));
    let aa_es = adversarial_accuracy(&e, &s);
    let aa_ts = adversarial_accuracy(&t, &s);
    Ok(NnaaReport { nnaa: aa_es - aa_ts, aa_es, aa_ts, n })
}
