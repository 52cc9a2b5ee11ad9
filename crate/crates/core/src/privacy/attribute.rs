use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distance::{nearest, BitSet};
use crate::error::{HaloError, Result};
use crate::recordkit::{CodeKind, Record, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeReport {
    /// Micro-F1 over every (record, sensitive code) pair; 0 when degenerate.
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// No sensitive bit is set in either the truth or the predictions.
    pub degenerate: bool,
    pub k_common: usize,
    pub n_queries: usize,
    pub n_sensitive: usize,
}

/// Splits the vocabulary's attributes: labels plus the `k_common` medical
/// codes most frequent in `reference` are known, the other medical codes
/// are sensitive. Bucket codes are left out.
#[derive(Debug, Clone)]
pub struct AttributeSplit {
    pub k_common: usize,
    pub conditional: Vec<String>,
    pub sensitive: Vec<String>,
}

impl AttributeSplit {
    pub fn new(vocab: &Vocabulary, reference: &[Record], k_common: usize) -> Result<Self> {
        let medical = vocab.ids_of_kind(CodeKind::Medical);
        if k_common >= medical.len() {
            return Err(HaloError::Config(format!(
                "k_common {k_common} leaves no sensitive codes among {}",
                medical.len()
            )));
        }
        let mut counts: HashMap<&str, usize> = medical.iter().map(|&c| (c, 0)).collect();
        for r in reference {
            let seen: BTreeSet<&str> = r.visits.iter().flat_map(|v| v.codes.iter().map(String::as_str)).collect();
            for c in seen {
                if let Some(k) = counts.get_mut(c) {
                    *k += 1;
                }
            }
        }
        let mut ranked = medical.clone();
        ranked.sort_by(|a, b| counts[b].cmp(&counts[a]).then(a.cmp(b)));
        let mut conditional: Vec<String> = vocab.ids_of_kind(CodeKind::Label).into_iter().map(String::from).collect();
        conditional.extend(ranked[..k_common].iter().map(|s| s.to_string()));
        let sensitive = ranked[k_common..].iter().map(|s| s.to_string()).collect();
        Ok(AttributeSplit { k_common, conditional, sensitive })
    }

    fn project(&self, r: &Record) -> (BitSet, Vec<bool>) {
        let codes: BTreeSet<&str> = r.visits.iter().flat_map(|v| v.codes.iter().map(String::as_str)).collect();
        let has = |id: &String| codes.contains(id.as_str()) || r.labels.contains(id);
        let cond: Vec<bool> = self.conditional.iter().map(has).collect();
        (BitSet::from_flags(&cond), self.sensitive.iter().map(has).collect())
    }
}

/// Copies each query's sensitive codes from the source record sharing the
/// most conditional attributes (lowest index on ties) and scores the copy.
pub fn attribute_inference_attack(split: &AttributeSplit, source: &[Record], queries: &[Record]) -> Result<AttributeReport> {
    if source.is_empty() || queries.is_empty() {
        return Err(HaloError::InsufficientData("attribute inference needs records on both sides".into()));
    }
    let (src_cond, src_sens): (Vec<BitSet>, Vec<Vec<bool>>) = source.iter().map(|r| split.project(r)).unzip();
    let counts = queries
        .par_iter()
        .map(|q| {
            let (cond, truth) = split.project(q);
            let (_, j) = nearest(&cond, &src_cond, None).expect("non-empty source");
            let mut c = [0usize; 3];
            for (&t, &p) in truth.iter().zip(&src_sens[j]) {
                match (p, t) {
                    (true, true) => c[0] += 1,
                    (true, false) => c[1] += 1,
                    (false, true) => c[2] += 1,
                    (false, false) => {}
                }
            }
            c
        })
        .reduce(|| [0; 3], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]]);
    let [tp, fp, fneg] = counts;
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(AttributeReport {
        f1: ratio(2 * tp, 2 * tp + fp + fneg),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fneg),
        degenerate: tp + fp + fneg == 0,
        k_common: split.k_common,
        n_queries: queries.len(),
        n_sensitive: split.sensitive.len(),
    })
}
