use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{HaloError, Result};
use crate::recordkit::{Record, Vocabulary, GAP_VARIABLE};

pub type ProbTable = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatKind {
    Unigram,
    SameVisitBigram,
    SequentialVisitBigram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Record,
    Visit,
}

impl StatKind {
    pub const ALL: [StatKind; 3] = [StatKind::Unigram, StatKind::SequentialVisitBigram, StatKind::SameVisitBigram];
}

impl Normalization {
    pub const ALL: [Normalization; 2] = [Normalization::Record, Normalization::Visit];
}

/// Short table name such as `seq_bigram_record`.
pub fn table_name(kind: StatKind, norm: Normalization) -> &'static str {
    match (kind, norm) {
        (StatKind::Unigram, Normalization::Record) => "unigram_record",
        (StatKind::SequentialVisitBigram, Normalization::Record) => "seq_bigram_record",
        (StatKind::SameVisitBigram, Normalization::Record) => "covis_bigram_record",
        (StatKind::Unigram, Normalization::Visit) => "unigram_visit",
        (StatKind::SequentialVisitBigram, Normalization::Visit) => "seq_bigram_visit",
        (StatKind::SameVisitBigram, Normalization::Visit) => "covis_bigram_visit",
    }
}

/// Unordered pair key, `a&b` with `a < b`.
pub fn same_visit_key(a: &str, b: &str) -> String {
    if a <= b {
        format!("{a}&{b}")
    } else {
        format!("{b}&{a}")
    }
}

/// Ordered key for `a` in one visit followed by `b` in the next.
pub fn sequential_key(a: &str, b: &str) -> String {
    format!("{a}>{b}")
}

/// Records reduced to interned per-visit code sets.
#[derive(Debug, Clone)]
pub struct CodedDataset {
    names: Vec<String>,
    records: Vec<Vec<Vec<u32>>>,
}

impl CodedDataset {
    /// Medical codes of each clinical visit. With a vocabulary, lab values
    /// and gaps are added as their bucket codes.
    pub fn from_records(records: &[Record], vocab: Option<&Vocabulary>) -> Self {
        let sets: Vec<Vec<BTreeSet<String>>> = records
            .iter()
            .map(|r| {
                r.visits
                    .iter()
                    .map(|v| {
                        let mut s = v.codes.clone();
                        if let Some(vocab) = vocab {
                            for (var, &x) in &v.labs {
                                if let Ok(id) = vocab.discretize_value(var, x) {
                                    s.insert(id.to_string());
                                }
                            }
                            if let Some(g) = v.gap_days {
                                if let Ok(id) = vocab.discretize_value(GAP_VARIABLE, g) {
                                    s.insert(id.to_string());
                                }
                            }
                        }
                        s
                    })
                    .collect()
            })
            .collect();
        let names: Vec<String> = sets.iter().flatten().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let index: HashMap<&str, u32> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i as u32)).collect();
        let records = sets
            .iter()
            .map(|r| r.iter().map(|v| v.iter().map(|c| index[c.as_str()]).collect()).collect())
            .collect();
        CodedDataset { names, records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Visits as sorted code-index lists.
    pub fn visits(&self, record: usize) -> &[Vec<u32>] {
        &self.records[record]
    }

    pub fn n_visits(&self) -> usize {
        self.records.iter().map(Vec::len).sum()
    }

    /// Codes ordered by descending record-level frequency, ties by name.
    pub fn codes_by_frequency(&self) -> Vec<u32> {
        let mut counts = vec![0u64; self.names.len()];
        for r in &self.records {
            let seen: BTreeSet<u32> = r.iter().flatten().copied().collect();
            for c in seen {
                counts[c as usize] += 1;
            }
        }
        let mut order: Vec<u32> = (0..self.names.len() as u32).collect();
        order.sort_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));
        order
    }
}

/// Event counts behind one probability table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TableCounts {
    pub numerators: BTreeMap<String, u64>,
    pub denominator: u64,
}

impl TableCounts {
    pub fn probabilities(&self) -> ProbTable {
        if self.denominator == 0 {
            return ProbTable::new();
        }
        let d = self.denominator as f64;
        self.numerators.iter().map(|(k, &n)| (k.clone(), n as f64 / d)).collect()
    }
}

fn allowed_set(data: &CodedDataset, top_k: Option<usize>) -> Option<Vec<bool>> {
    let k = top_k?;
    if k >= data.names.len() {
        return None;
    }
    let mut allowed = vec![false; data.names.len()];
    for &c in data.codes_by_frequency().iter().take(k) {
        allowed[c as usize] = true;
    }
    Some(allowed)
}

/// Per-record event keys for one record; visit normalization counts
/// each visit (or adjacent pair), record normalization each record.
fn record_events(
    visits: &[Vec<u32>],
    kind: StatKind,
    norm: Normalization,
    allowed: &Option<Vec<bool>>,
    out: &mut HashMap<(u32, u32), u64>,
) -> u64 {
    let ok = |c: u32| allowed.as_ref().map_or(true, |a| a[c as usize]);
    let mut local: BTreeSet<(u32, u32)> = BTreeSet::new();
    let mut bump = |key: (u32, u32), local: &mut BTreeSet<(u32, u32)>| match norm {
        Normalization::Record => {
            local.insert(key);
        }
        Normalization::Visit => *out.entry(key).or_insert(0) += 1,
    };
    let units = match kind {
        StatKind::Unigram => {
            for v in visits {
                for &a in v {
                    bump((a, a), &mut local);
                }
            }
            visits.len()
        }
        StatKind::SameVisitBigram => {
            for v in visits {
                for (i, &a) in v.iter().enumerate() {
                    if !ok(a) {
                        continue;
                    }
                    for &b in &v[i + 1..] {
                        if ok(b) {
                            bump((a, b), &mut local);
                        }
                    }
                }
            }
            visits.len()
        }
        StatKind::SequentialVisitBigram => {
            for w in visits.windows(2) {
                for &a in w[0].iter().filter(|&&a| ok(a)) {
                    for &b in w[1].iter().filter(|&&b| ok(b)) {
                        bump((a, b), &mut local);
                    }
                }
            }
            visits.len().saturating_sub(1)
        }
    };
    if norm == Normalization::Record {
        for key in local {
            *out.entry(key).or_insert(0) += 1;
        }
        1
    } else {
        units as u64
    }
}

/// Raw counts for one table; pair tables are restricted to the `top_k`
/// most frequent codes when given.
pub fn code_counts(data: &CodedDataset, kind: StatKind, norm: Normalization, top_k: Option<usize>) -> TableCounts {
    let allowed = if kind == StatKind::Unigram { None } else { allowed_set(data, top_k) };
    let mut counts: HashMap<(u32, u32), u64> = HashMap::new();
    let mut denominator = 0;
    for visits in &data.records {
        denominator += record_events(visits, kind, norm, &allowed, &mut counts);
    }
    let name = |i: u32| data.names[i as usize].as_str();
    let numerators = counts
        .into_iter()
        .map(|((a, b), n)| {
            let key = match kind {
                StatKind::Unigram => name(a).to_string(),
                StatKind::SameVisitBigram => same_visit_key(name(a), name(b)),
                StatKind::SequentialVisitBigram => sequential_key(name(a), name(b)),
            };
            (key, n)
        })
        .collect();
    TableCounts { numerators, denominator }
}

/// Probability of each code, same-visit pair or consecutive-visit pair.
pub fn code_probabilities(
    data: &CodedDataset,
    kind: StatKind,
    norm: Normalization,
    top_k: Option<usize>,
) -> Result<ProbTable> {
    if data.is_empty() {
        return Err(HaloError::EmptyCorpus);
    }
    Ok(code_counts(data, kind, norm, top_k).probabilities())
}

/// All six code-probability tables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TableSet {
    pub tables: BTreeMap<String, ProbTable>,
}

impl TableSet {
    pub fn compute(data: &CodedDataset, top_k: Option<usize>) -> Result<Self> {
        let mut tables = BTreeMap::new();
        for norm in Normalization::ALL {
            for kind in StatKind::ALL {
                tables.insert(table_name(kind, norm).to_string(), code_probabilities(data, kind, norm, top_k)?);
            }
        }
        Ok(TableSet { tables })
    }

    pub fn get(&self, kind: StatKind, norm: Normalization) -> &ProbTable {
        static EMPTY: ProbTable = ProbTable::new();
        self.tables.get(table_name(kind, norm)).unwrap_or(&EMPTY)
    }

    pub fn get_mut(&mut self, kind: StatKind, norm: Normalization) -> &mut ProbTable {
        self.tables.entry(table_name(kind, norm).to_string()).or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recordkit::Visit;

    fn rec(visits: &[&[&str]]) -> Record {
        let mut r = Record::new("p");
        r.visits = visits.iter().map(|v| Visit::with_codes(v.iter().copied())).collect();
        r
    }

    #[test]
    fn record_unigram_hand_count() {
        let data = CodedDataset::from_records(&[rec(&[&["A"]]), rec(&[&["B"], &["A", "B"]]), rec(&[&["C"]])], None);
        let t = code_probabilities(&data, StatKind::Unigram, Normalization::Record, None).unwrap();
        assert!((t["A"] - 2.0 / 3.0).abs() < 1e-15);
        assert!((t["B"] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn code_in_every_visit_has_visit_probability_one() {
        let data = CodedDataset::from_records(&[rec(&[&["A"], &["A", "B"]]), rec(&[&["A", "C"]])], None);
        let t = code_probabilities(&data, StatKind::Unigram, Normalization::Visit, None).unwrap();
        assert_eq!(t["A"], 1.0);
        assert!((t["B"] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn pair_tables() {
        let data = CodedDataset::from_records(&[rec(&[&["B", "A"], &["A", "B"], &["C"]]), rec(&[&["C"], &["A"]])], None);
        let covis = code_probabilities(&data, StatKind::SameVisitBigram, Normalization::Record, None).unwrap();
        assert_eq!(covis["A&B"], 0.5);
        let covis_v = code_probabilities(&data, StatKind::SameVisitBigram, Normalization::Visit, None).unwrap();
        assert!((covis_v["A&B"] - 2.0 / 5.0).abs() < 1e-15);
        let seq = code_probabilities(&data, StatKind::SequentialVisitBigram, Normalization::Record, None).unwrap();
        assert_eq!(seq["A>B"], 0.5);
        assert_eq!(seq["C>A"], 0.5);
        assert_eq!(seq["A>A"], 0.5);
        assert!(!seq.contains_key("B>A") || seq["B>A"] == 0.5);
        let seq_v = code_probabilities(&data, StatKind::SequentialVisitBigram, Normalization::Visit, None).unwrap();
        assert!((seq_v["C>A"] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn top_k_restricts_pairs() {
        let data = CodedDataset::from_records(&[rec(&[&["A", "B", "C"]]), rec(&[&["A", "B"]])], None);
        let t = code_probabilities(&data, StatKind::SameVisitBigram, Normalization::Record, Some(2)).unwrap();
        assert_eq!(t.keys().collect::<Vec<_>>(), vec!["A&B"]);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let data = CodedDataset::from_records(&[], None);
        assert!(matches!(
            code_probabilities(&data, StatKind::Unigram, Normalization::Record, None),
            Err(HaloError::EmptyCorpus)
        ));
    }

    #[test]
    fn union_is_size_weighted_mean() {
        let a = vec![rec(&[&["A"]]), rec(&[&["B"]])];
        let b = vec![rec(&[&["A", "B"]]), rec(&[&["A"]]), rec(&[&["C"]])];
        let all: Vec<Record> = a.iter().chain(&b).cloned().collect();
        let p = |rs: &[Record]| {
            code_probabilities(&CodedDataset::from_records(rs, None), StatKind::Unigram, Normalization::Record, None)
                .unwrap()
        };
        let (pa, pb, pall) = (p(&a), p(&b), p(&all));
        let want = (2.0 * pa["A"] + 3.0 * pb["A"]) / 5.0;
        assert!((pall["A"] - want).abs() < 1e-15);
    }
}
