use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tables::{CodedDataset, ProbTable};
use crate::error::{HaloError, Result};
use crate::recordkit::{Record, GAP_VARIABLE};

/// Population mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Zero for an empty sample.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
        for x in values {
            n += 1;
            sum += x;
            sq += x * x;
        }
        if n == 0 {
            return MeanStd::default();
        }
        let mean = sum / n as f64;
        MeanStd { mean, std: (sq / n as f64 - mean * mean).max(0.0).sqrt() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub n_records: usize,
    /// Clinical visits per record.
    pub record_length: MeanStd,
    /// Codes per clinical visit, buckets included when the dataset has them.
    pub visit_length: MeanStd,
}

pub fn aggregate_stats(data: &CodedDataset) -> Result<AggregateStats> {
    if data.is_empty() {
        return Err(HaloError::EmptyCorpus);
    }
    let records = 0..data.len();
    Ok(AggregateStats {
        n_records: data.len(),
        record_length: MeanStd::of(records.clone().map(|i| data.visits(i).len() as f64)),
        visit_length: MeanStd::of(records.flat_map(|i| data.visits(i).iter().map(|v| v.len() as f64))),
    })
}

/// Fraction of records carrying each label. `known` labels absent from
/// every record report 0.
pub fn label_probabilities<'a>(records: &[Record], known: impl IntoIterator<Item = &'a str>) -> Result<ProbTable> {
    if records.is_empty() {
        return Err(HaloError::EmptyCorpus);
    }
    let mut counts: BTreeMap<String, usize> = known.into_iter().map(|l| (l.to_string(), 0)).collect();
    for r in records {
        for l in &r.labels {
            *counts.entry(l.clone()).or_default() += 1;
        }
    }
    let n = records.len() as f64;
    Ok(counts.into_iter().map(|(l, c)| (l, c as f64 / n)).collect())
}

/// Squared Pearson correlation.
pub fn r_squared(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(HaloError::Shape(format!("r² needs two equal series of length ≥ 2, got {} and {}", x.len(), y.len())));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(HaloError::InsufficientData("r² of a constant series".into()));
    }
    Ok((sxy * sxy / (sxx * syy)).min(1.0))
}

/// Both tables over the union of their keys, missing entries as 0.
pub fn aligned(a: &ProbTable, b: &ProbTable) -> (Vec<String>, Vec<f64>, Vec<f64>) {
    let mut keys: Vec<String> = a.keys().chain(b.keys()).cloned().collect();
    keys.sort();
    keys.dedup();
    let get = |t: &ProbTable, k: &String| t.get(k).copied().unwrap_or(0.0);
    let xa = keys.iter().map(|k| get(a, k)).collect();
    let xb = keys.iter().map(|k| get(b, k)).collect();
    (keys, xa, xb)
}

pub fn table_r_squared(real: &ProbTable, synthetic: &ProbTable) -> Result<f64> {
    let (_, x, y) = aligned(real, synthetic);
    r_squared(&x, &y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSummary {
    /// Fraction of clinical visits carrying the variable.
    pub presence: f64,
    /// Mean of the present values; absent when never present.
    pub mean: Option<f64>,
    pub n_present: usize,
}

/// Gap density over fixed bins; gaps past the last edge count in
/// `overflow` as a fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapHistogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
    pub overflow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSummary {
    pub n_visits: usize,
    /// Every lab and `gap_days`.
    pub variables: BTreeMap<String, VariableSummary>,
    pub gap_histogram: GapHistogram,
    /// Mean gap of the visits at each position; `None` where no visit has one.
    pub mean_gap_by_visit: Vec<Option<f64>>,
}

/// Ten-day bins up to a year.
pub fn default_gap_edges() -> Vec<f64> {
    (0..=37).map(|i| 10.0 * i as f64).collect()
}

pub fn continuous_summaries(records: &[Record], gap_edges: &[f64]) -> Result<ContinuousSummary> {
    if gap_edges.len() < 2 || gap_edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(HaloError::Config("gap histogram edges must increase".into()));
    }
    let mut sums: BTreeMap<String, (usize, f64)> = BTreeMap::new();
    let mut bins = vec![0usize; gap_edges.len() - 1];
    let (mut overflow, mut n_gaps, mut n_visits) = (0usize, 0usize, 0usize);
    let mut by_index: Vec<(usize, f64)> = Vec::new();
    sums.insert(GAP_VARIABLE.to_string(), (0, 0.0));
    for r in records {
        for (t, v) in r.visits.iter().enumerate() {
            n_visits += 1;
            for (name, &x) in &v.labs {
                let e = sums.entry(name.clone()).or_default();
                e.0 += 1;
                e.1 += x;
            }
            let Some(g) = v.gap_days else { continue };
            let e = sums.get_mut(GAP_VARIABLE).expect("inserted above");
            e.0 += 1;
            e.1 += g;
            if by_index.len() <= t {
                by_index.resize(t + 1, (0, 0.0));
            }
            by_index[t].0 += 1;
            by_index[t].1 += g;
            n_gaps += 1;
            match gap_edges.windows(2).position(|w| g >= w[0] && g < w[1]) {
                Some(b) => bins[b] += 1,
                None => overflow += 1,
            }
        }
    }
    let frac = |c: usize, n: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    let variables = sums
        .into_iter()
        .map(|(name, (c, s))| {
            let summary = VariableSummary {
                presence: frac(c, n_visits),
                mean: (c > 0).then(|| s / c as f64),
                n_present: c,
            };
            (name, summary)
        })
        .collect();
    let density = bins
        .iter()
        .zip(gap_edges.windows(2))
        .map(|(&c, w)| frac(c, n_gaps) / (w[1] - w[0]))
        .collect();
    Ok(ContinuousSummary {
        n_visits,
        variables,
        gap_histogram: GapHistogram { edges: gap_edges.to_vec(), density, overflow: frac(overflow, n_gaps) },
        mean_gap_by_visit: by_index.into_iter().map(|(c, s)| (c > 0).then(|| s / c as f64)).collect(),
    })
}
