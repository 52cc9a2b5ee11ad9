use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HaloError, Result};

/// Same-visit coupling: `weight` is added to the logit of `second`
/// when `first` (sampled earlier) is present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairCoupling {
    pub first: usize,
    pub second: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyLab {
    pub name: String,
    /// Per-visit probability that the lab is measured.
    pub presence: f64,
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyGap {
    pub low: f64,
    pub high: f64,
}

/// Parameters of the toy record process.
///
/// Codes of a visit are drawn one at a time in index order, each with
/// logit `base + labels·W_L + previous_visit·W_V + Σ couplings`.
/// Empty weight matrices mean all zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyParams {
    pub n_codes: usize,
    pub n_labels: usize,
    pub label_priors: Vec<f64>,
    pub base_logits: Vec<f64>,
    /// `n_labels × n_codes`
    #[serde(default)]
    pub label_weights: Vec<Vec<f64>>,
    /// `n_codes × n_codes`, row = code in the previous visit.
    #[serde(default)]
    pub visit_weights: Vec<Vec<f64>>,
    #[serde(default)]
    pub pair_couplings: Vec<PairCoupling>,
    /// Probability of another visit after each visit.
    pub continuation: f64,
    pub max_visits: usize,
    #[serde(default)]
    pub labs: Vec<ToyLab>,
    #[serde(default)]
    pub gap_days: Option<ToyGap>,
    #[serde(default)]
    pub code_names: Vec<String>,
    #[serde(default)]
    pub label_names: Vec<String>,
}

impl ToyParams {
    /// Independent codes with the given base logits and no labels.
    pub fn independent(base_logits: Vec<f64>, continuation: f64, max_visits: usize) -> Self {
        ToyParams {
            n_codes: base_logits.len(),
            n_labels: 0,
            label_priors: vec![],
            base_logits,
            label_weights: vec![],
            visit_weights: vec![],
            pair_couplings: vec![],
            continuation,
            max_visits,
            labs: vec![],
            gap_days: None,
            code_names: vec![],
            label_names: vec![],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HaloError::Config(format!("toy params: {m}")));
        if self.n_codes == 0 {
            return bad("n_codes must be positive".into());
        }
        if self.max_visits == 0 {
            return bad("max_visits must be positive".into());
        }
        if self.label_priors.len() != self.n_labels {
            return bad(format!("{} label priors for {} labels", self.label_priors.len(), self.n_labels));
        }
        if self.label_priors.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("label priors must lie in [0, 1]".into());
        }
        if !(0.0..1.0).contains(&self.continuation) {
            return bad("continuation must lie in [0, 1)".into());
        }
        if self.base_logits.len() != self.n_codes || self.base_logits.iter().any(|x| !x.is_finite()) {
            return bad("base_logits must hold n_codes finite values".into());
        }
        let matrix_ok = |m: &Vec<Vec<f64>>, rows: usize| {
            m.is_empty() || (m.len() == rows && m.iter().all(|r| r.len() == self.n_codes && r.iter().all(|x| x.is_finite())))
        };
        if !matrix_ok(&self.label_weights, self.n_labels) {
            return bad("label_weights must be n_labels × n_codes and finite".into());
        }
        if !matrix_ok(&self.visit_weights, self.n_codes) {
            return bad("visit_weights must be n_codes × n_codes and finite".into());
        }
        for c in &self.pair_couplings {
            if c.first >= c.second || c.second >= self.n_codes || !c.weight.is_finite() {
                return bad(format!("pair coupling {}→{} must satisfy first < second < n_codes", c.first, c.second));
            }
        }
        for lab in &self.labs {
            if !(0.0..=1.0).contains(&lab.presence) || !(lab.low < lab.high) || !lab.high.is_finite() {
                return bad(format!("lab {}: presence in [0,1] and finite low < high", lab.name));
            }
        }
        if let Some(g) = self.gap_days {
            if !(0.0 <= g.low && g.low < g.high && g.high.is_finite()) {
                return bad("gap_days needs 0 <= low < high".into());
            }
        }
        if !self.code_names.is_empty() && self.code_names.len() != self.n_codes {
            return bad("code_names length".into());
        }
        if !self.label_names.is_empty() && self.label_names.len() != self.n_labels {
            return bad("label_names length".into());
        }
        Ok(())
    }

    pub fn code_name(&self, i: usize) -> String {
        match self.code_names.get(i) {
            Some(n) => n.clone(),
            None => format!("code{i:02}"),
        }
    }

    pub fn label_name(&self, i: usize) -> String {
        match self.label_names.get(i) {
            Some(n) => n.clone(),
            None => format!("label{i}"),
        }
    }

    pub fn label_weight(&self, label: usize, code: usize) -> f64 {
        self.label_weights.get(label).map_or(0.0, |r| r[code])
    }

    pub fn visit_weight(&self, prev: usize, code: usize) -> f64 {
        self.visit_weights.get(prev).map_or(0.0, |r| r[code])
    }

    /// Couplings into each code, as `(first, weight)` lists.
    pub(crate) fn incoming(&self) -> Vec<Vec<(usize, f64)>> {
        let mut inc = vec![Vec::new(); self.n_codes];
        for c in &self.pair_couplings {
            inc[c.second].push((c.first, c.weight));
        }
        inc
    }

    /// `P(length = t)` for `t = 1..=max_visits`.
    pub fn length_distribution(&self) -> Vec<f64> {
        let c = self.continuation;
        (1..=self.max_visits)
            .map(|t| if t < self.max_visits { c.powi(t as i32 - 1) * (1.0 - c) } else { c.powi(t as i32 - 1) })
            .collect()
    }

    pub fn expected_visits(&self) -> f64 {
        (0..self.max_visits).map(|t| self.continuation.powi(t as i32)).sum()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let p: ToyParams = serde_json::from_slice(&std::fs::read(path)?)?;
        p.validate()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_distribution_sums_to_one() {
        let p = ToyParams::independent(vec![0.0], 0.6, 4);
        let d = p.length_distribution();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let mean: f64 = d.iter().enumerate().map(|(i, q)| (i + 1) as f64 * q).sum();
        assert!((mean - p.expected_visits()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = ToyParams::independent(vec![0.0, 0.0], 1.0, 3);
        assert!(p.validate().is_err());
        p.continuation = 0.5;
        p.pair_couplings.push(PairCoupling { first: 1, second: 0, weight: 1.0 });
        assert!(p.validate().is_err());
        p.pair_couplings.clear();
        p.base_logits[0] = f64::NAN;
        assert!(p.validate().is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let json = r#"{"n_codes":1,"n_labels":0,"label_priors":[],"base_logits":[0],"continuation":0,"max_visits":1,"extra":1}"#;
        assert!(serde_json::from_str::<ToyParams>(json).is_err());
    }
}
