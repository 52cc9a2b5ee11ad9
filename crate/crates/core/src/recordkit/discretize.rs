//! Bucket tables for continuous variables (labs and inter-visit gaps).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{HaloError, Result};
use crate::rng::{self, Rng};

/// Half-open interval `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub lo: f64,
    pub hi: f64,
}

impl Bucket {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x < self.hi
    }

    /// Uniform draw on `[lo, hi)`.
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        let v = self.lo + (self.hi - self.lo) * rng::unit(rng);
        // rounding can land on hi when the width is tiny relative to lo
        if v >= self.hi {
            self.lo
        } else {
            v
        }
    }
}

/// Ordered, contiguous buckets for one variable.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketTable {
    buckets: Vec<Bucket>,
}

impl BucketTable {
    pub fn new(variable: &str, buckets: Vec<Bucket>) -> Result<Self> {
        let bad = |reason: String| HaloError::InvalidBuckets {
            variable: variable.to_string(),
            reason,
        };
        if buckets.len() < 2 {
            return Err(bad(format!("need at least 2 buckets, got {}", buckets.len())));
        }
        for (i, b) in buckets.iter().enumerate() {
            if !(b.lo < b.hi) || !b.lo.is_finite() || !b.hi.is_finite() {
                return Err(bad(format!("bucket {} has lo >= hi ({}, {})", i + 1, b.lo, b.hi)));
            }
        }
        for (i, w) in buckets.windows(2).enumerate() {
            if w[0].hi != w[1].lo {
                return Err(bad(format!(
                    "buckets {} and {} are not contiguous ({} vs {})",
                    i + 1,
                    i + 2,
                    w[0].hi,
                    w[1].lo
                )));
            }
        }
        Ok(BucketTable { buckets })
    }

    /// Builds a table from strictly increasing edges `e0 < e1 < ... < ek`.
    pub fn from_edges(variable: &str, edges: &[f64]) -> Result<Self> {
        let buckets = edges.windows(2).map(|w| Bucket { lo: w[0], hi: w[1] }).collect();
        Self::new(variable, buckets)
    }

    /// Equal-frequency buckets over `values`. Duplicate quantile edges are
    /// merged, so heavily tied data may yield fewer than `k` buckets.
    pub fn quantiles(variable: &str, values: &[f64], k: usize) -> Result<Self> {
        if k < 2 {
            return Err(HaloError::InvalidBuckets {
                variable: variable.to_string(),
                reason: "quantile count must be at least 2".into(),
            });
        }
        let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        if sorted.is_empty() {
            return Err(HaloError::InvalidBuckets {
                variable: variable.to_string(),
                reason: "no observed values".into(),
            });
        }
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let (min, max) = (sorted[0], sorted[n - 1]);
        if min == max {
            return Err(HaloError::InvalidBuckets {
                variable: variable.to_string(),
                reason: format!("all observed values equal {min}"),
            });
        }
        let mut edges = vec![min];
        for j in 1..k {
            let q = sorted[(j * n) / k];
            if q > *edges.last().unwrap() {
                edges.push(q);
            }
        }
        if edges.len() == 1 {
            // every quantile tied with the minimum: cut at the next distinct value
            edges.push(*sorted.iter().find(|&&v| v > min).unwrap());
        }
        let top = *edges.last().unwrap();
        if max > top {
            edges.push(max);
        } else {
            // max is itself a cut; give it a bucket of its own
            edges.push(max + (max - min) / k as f64);
        }
        Self::from_edges(variable, &edges)
    }

    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn buckets(&self) -> &[Bucket] {
        &self.buckets
    }

    /// Index of the bucket containing `x`; out-of-range values clamp to the
    /// boundary buckets.
    pub fn index_of(&self, x: f64) -> usize {
        let last = self.buckets.len() - 1;
        if x < self.buckets[0].lo {
            return 0;
        }
        if x >= self.buckets[last].hi {
            return last;
        }
        // first bucket whose hi exceeds x
        self.buckets.partition_point(|b| b.hi <= x).min(last)
    }
}

/// How buckets for one variable are built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketSpec {
    /// Clinician-style ranges given as `[[lo, hi], ...]`.
    Ranges(Vec<[f64; 2]>),
    /// Equal-frequency quantiles over the training values.
    Quantiles(usize),
}

/// Bucket construction settings for `build_vocabulary`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucketConfig {
    /// Quantile count for variables without an explicit spec.
    #[serde(default = "default_k")]
    pub default_quantiles: usize,
    #[serde(default)]
    pub variables: BTreeMap<String, BucketSpec>,
}

fn default_k() -> usize {
    5
}

impl Default for BucketConfig {
    fn default() -> Self {
        BucketConfig {
            default_quantiles: default_k(),
            variables: BTreeMap::new(),
        }
    }
}

/// Per-variable bucket tables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Discretizer {
    tables: BTreeMap<String, BucketTable>,
}

impl Discretizer {
    /// Builds tables for every variable with observed values; variables
    /// configured with explicit ranges are included even if unobserved.
    pub fn build(config: &BucketConfig, observed: &BTreeMap<String, Vec<f64>>) -> Result<Self> {
        let mut tables = BTreeMap::new();
        for (name, spec) in &config.variables {
            if let BucketSpec::Ranges(ranges) = spec {
                let buckets = ranges.iter().map(|r| Bucket { lo: r[0], hi: r[1] }).collect();
                tables.insert(name.clone(), BucketTable::new(name, buckets)?);
            }
        }
        for (name, values) in observed {
            if tables.contains_key(name) || values.is_empty() {
                continue;
            }
            let k = match config.variables.get(name) {
                Some(BucketSpec::Quantiles(k)) => *k,
                _ => config.default_quantiles,
            };
            tables.insert(name.clone(), BucketTable::quantiles(name, values, k)?);
        }
        Ok(Discretizer { tables })
    }

    pub fn from_tables(tables: BTreeMap<String, BucketTable>) -> Self {
        Discretizer { tables }
    }

    pub fn tables(&self) -> &BTreeMap<String, BucketTable> {
        &self.tables
    }

    pub fn table(&self, variable: &str) -> Result<&BucketTable> {
        self.tables
            .get(variable)
            .ok_or_else(|| HaloError::UnknownVariable(variable.to_string()))
    }

    pub fn bucket_index(&self, variable: &str, value: f64) -> Result<usize> {
        Ok(self.table(variable)?.index_of(value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn heart_rate() -> BucketTable {
        let edges = [
            0.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0, 110.0, 120.0, 130.0, 140.0, 150.0,
            160.0, 180.0, 200.0, 250.0, 300.0, 340.0, 380.0, 400.0,
        ];
        BucketTable::from_edges("heart_rate", &edges).unwrap()
    }

    #[test]
    fn heart_rate_buckets() {
        let t = heart_rate();
        assert_eq!(t.len(), 20);
        assert_eq!(t.buckets()[0], Bucket { lo: 0.0, hi: 40.0 });
        assert_eq!(t.buckets()[6], Bucket { lo: 90.0, hi: 100.0 });
        assert_eq!(t.index_of(93.0), 6);
        assert_eq!(t.index_of(39.9), 0);
        assert_eq!(t.index_of(450.0), 19);
        assert_eq!(t.index_of(-3.0), 0);
        assert_eq!(t.index_of(40.0), 1);
    }

    #[test]
    fn degenerate_bucket_rejected() {
        let err = BucketTable::new("x", vec![Bucket { lo: 1.0, hi: 1.0 }, Bucket { lo: 1.0, hi: 2.0 }]);
        assert!(matches!(err, Err(HaloError::InvalidBuckets { .. })));
        let gap = BucketTable::new("x", vec![Bucket { lo: 0.0, hi: 1.0 }, Bucket { lo: 2.0, hi: 3.0 }]);
        assert!(gap.is_err());
        assert!(BucketTable::from_edges("x", &[0.0, 1.0]).is_err());
    }

    #[test]
    fn quantile_buckets_cover_range() {
        let values: Vec<f64> = (0..1000).map(|i| i as f64 / 10.0).collect();
        let t = BucketTable::quantiles("v", &values, 4).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t.buckets()[0].lo, 0.0);
        assert_eq!(t.buckets()[3].hi, 99.9);
        assert_eq!(t.buckets()[1].lo, 25.0);
        // ties collapse
        let tied = vec![1.0; 50].into_iter().chain([2.0, 3.0]).collect::<Vec<_>>();
        let t = BucketTable::quantiles("v", &tied, 5).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.index_of(1.0), 0);
        assert_eq!(t.index_of(3.0), 1);
        let two = BucketTable::quantiles("v", &[0.0, 100.0], 5).unwrap();
        assert_ne!(two.index_of(0.0), two.index_of(100.0));
        assert!(BucketTable::quantiles("v", &[4.0, 4.0], 3).is_err());
    }

    #[test]
    fn uniform_reconstruction_mean() {
        let b = Bucket { lo: 0.0, hi: 40.0 };
        let mut r = rng::seeded(5);
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let v = b.sample(&mut r);
            assert!(b.contains(v));
            sum += v;
        }
        let mean = sum / n as f64;
        // 4 standard errors of the uniform mean: 40/sqrt(12 n) * 4
        let tol = 40.0 / (12.0 * n as f64).sqrt() * 4.0;
        assert!((mean - 20.0).abs() < tol, "mean {mean} tol {tol}");
    }

    #[test]
    fn sample_stays_inside_bucket() {
        let b = Bucket { lo: 90.0, hi: 100.0 };
        for seed in 0..200 {
            let v = b.sample(&mut rng::seeded(seed));
            assert!((90.0..100.0).contains(&v));
        }
    }
}
