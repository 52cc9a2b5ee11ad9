use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::summary::{
    aggregate_stats, aligned, continuous_summaries, default_gap_edges, label_probabilities, table_r_squared,
    AggregateStats, ContinuousSummary,
};
use super::tables::{CodedDataset, ProbTable, TableSet};
use crate::error::Result;
use crate::recordkit::{CodeKind, Record, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    /// Pair tables use only the `top_k` most frequent codes of each dataset.
    pub top_k: Option<usize>,
    pub gap_edges: Vec<f64>,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig { top_k: None, gap_edges: default_gap_edges() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub aggregate: AggregateStats,
    pub labels: ProbTable,
    pub continuous: ContinuousSummary,
    pub tables: TableSet,
}

impl DatasetStats {
    pub fn compute(records: &[Record], vocab: Option<&Vocabulary>, config: &StatsConfig) -> Result<Self> {
        let data = CodedDataset::from_records(records, vocab);
        let known: Vec<&str> = vocab.map(|v| v.ids_of_kind(CodeKind::Label)).unwrap_or_default();
        Ok(DatasetStats {
            aggregate: aggregate_stats(&data)?,
            labels: label_probabilities(records, known)?,
            continuous: continuous_summaries(records, &config.gap_edges)?,
            tables: TableSet::compute(&data, config.top_k)?,
        })
    }
}

/// Real against synthetic. `r2` holds `None` where a series is constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub real: DatasetStats,
    pub synthetic: DatasetStats,
    pub r2: BTreeMap<String, Option<f64>>,
}

impl StatsReport {
    pub fn compute(real: &[Record], synthetic: &[Record], vocab: Option<&Vocabulary>, config: &StatsConfig) -> Result<Self> {
        let real = DatasetStats::compute(real, vocab, config)?;
        let synthetic = DatasetStats::compute(synthetic, vocab, config)?;
        let r2 = real
            .tables
            .tables
            .iter()
            .map(|(name, t)| {
                let empty = ProbTable::new();
                let s = synthetic.tables.tables.get(name).unwrap_or(&empty);
                (name.clone(), table_r_squared(t, s).ok())
            })
            .collect();
        Ok(StatsReport { real, synthetic, r2 })
    }

    /// One `statistic,value` row per scalar.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("statistic,value\n");
        let mut row = |k: String, v: Option<f64>| {
            let v = v.map(|x| x.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{k},{v}");
        };
        for (name, v) in &self.r2 {
            row(format!("r2.{name}"), *v);
        }
        for (side, s) in [("real", &self.real), ("synthetic", &self.synthetic)] {
            let a = &s.aggregate;
            row(format!("{side}.n_records"), Some(a.n_records as f64));
            row(format!("{side}.record_length_mean"), Some(a.record_length.mean));
            row(format!("{side}.record_length_std"), Some(a.record_length.std));
            row(format!("{side}.visit_length_mean"), Some(a.visit_length.mean));
            row(format!("{side}.visit_length_std"), Some(a.visit_length.std));
            for (l, p) in &s.labels {
                row(format!("{side}.label.{l}"), Some(*p));
            }
            for (name, v) in &s.continuous.variables {
                row(format!("{side}.presence.{name}"), Some(v.presence));
                row(format!("{side}.mean.{name}"), v.mean);
            }
        }
        out
    }

    /// Scatter and curve data keyed by file stem.
    pub fn plot_data(&self) -> BTreeMap<String, String> {
        let mut files = BTreeMap::new();
        let pair = |a: &ProbTable, b: &ProbTable| {
            let (keys, x, y) = aligned(a, b);
            let mut s = String::from("key,real,synthetic\n");
            for ((k, x), y) in keys.iter().zip(x).zip(y) {
                let _ = writeln!(s, "{},{x},{y}", csv_field(k));
            }
            s
        };
        for (name, t) in &self.real.tables.tables {
            let empty = ProbTable::new();
            files.insert(format!("plotdata_{name}"), pair(t, self.synthetic.tables.tables.get(name).unwrap_or(&empty)));
        }
        files.insert("plotdata_labels".into(), pair(&self.real.labels, &self.synthetic.labels));
        let (rc, sc) = (&self.real.continuous, &self.synthetic.continuous);
        let table = |f: &dyn Fn(&ContinuousSummary) -> ProbTable| pair(&f(rc), &f(sc));
        files.insert(
            "plotdata_presence".into(),
            table(&|c| c.variables.iter().map(|(k, v)| (k.clone(), v.presence)).collect()),
        );
        let names: BTreeSet<&String> = rc.variables.keys().chain(sc.variables.keys()).collect();
        let mut means = String::from("key,real,synthetic\n");
        for k in names {
            let get = |c: &ContinuousSummary| c.variables.get(k).and_then(|v| v.mean).map(|x| x.to_string()).unwrap_or_default();
            let _ = writeln!(means, "{},{},{}", csv_field(k), get(rc), get(sc));
        }
        files.insert("plotdata_mean_value".into(), means);
        let mut hist = String::from("low,high,real,synthetic\n");
        for (i, w) in rc.gap_histogram.edges.windows(2).enumerate() {
            let s = sc.gap_histogram.density.get(i).copied().unwrap_or(0.0);
            let _ = writeln!(hist, "{},{},{},{s}", w[0], w[1], rc.gap_histogram.density[i]);
        }
        files.insert("plotdata_gap_histogram".into(), hist);
        let mut by_visit = String::from("visit,real,synthetic\n");
        let n = rc.mean_gap_by_visit.len().max(sc.mean_gap_by_visit.len());
        for t in 0..n {
            let get = |c: &ContinuousSummary| c.mean_gap_by_visit.get(t).copied().flatten().map(|x| x.to_string()).unwrap_or_default();
            let _ = writeln!(by_visit, "{t},{},{}", get(rc), get(sc));
        }
        files.insert("plotdata_gap_by_visit".into(), by_visit);
        files
    }

    /// Writes `stats_report.json`, `stats_summary.csv` and the plot data.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("stats_report.json"), serde_json::to_string_pretty(self)?)?;
        std::fs::write(dir.join("stats_summary.csv"), self.summary_csv())?;
        for (stem, body) in self.plot_data() {
            std::fs::write(dir.join(format!("{stem}.csv")), body)?;
        }
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
