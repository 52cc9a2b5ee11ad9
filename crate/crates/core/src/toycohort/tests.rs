use std::collections::{BTreeMap, HashSet};

use super::*;
use crate::recordkit::Record;
use crate::rng;
use crate::statseval::{
    code_counts, same_visit_key, table_name, CodedDataset, Normalization, StatKind, TableSet,
};

fn coupled_params() -> ToyParams {
    let mut p = ToyParams::independent(vec![-1.0, -0.5, -1.5, 0.0, -2.0], 0.6, 3);
    p.n_labels = 2;
    p.label_priors = vec![0.3, 0.6];
    p.label_weights = vec![vec![2.0, 0.0, 0.0, -1.0, 0.0], vec![0.0, 0.0, 1.0, 0.0, 0.5]];
    let mut vw = vec![vec![0.0; 5]; 5];
    vw[0][4] = 2.5;
    vw[3][3] = 1.0;
    vw[2][1] = -1.5;
    p.visit_weights = vw;
    p.pair_couplings = vec![
        PairCoupling { first: 0, second: 1, weight: 4.0 },
        PairCoupling { first: 2, second: 3, weight: -2.0 },
    ];
    p
}

/// Sums over records of `x²` and `x·n` per key for the ratio-estimator
/// standard error of visit-normalized tables.
fn visit_moments(records: &[Record], kind: StatKind) -> (BTreeMap<String, (f64, f64)>, f64, f64) {
    let mut moments: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let (mut sn, mut sn2) = (0.0, 0.0);
    for r in records {
        let c = code_counts(&CodedDataset::from_records(std::slice::from_ref(r), None), kind, Normalization::Visit, None);
        let units = c.denominator as f64;
        sn += units;
        sn2 += units * units;
        for (k, &x) in &c.numerators {
            let e = moments.entry(k.clone()).or_default();
            e.0 += (x * x) as f64;
            e.1 += x as f64 * units;
        }
    }
    (moments, sn, sn2)
}

fn assert_within_bands(exact: &TableSet, records: &[Record], sigmas: f64) {
    let data = CodedDataset::from_records(records, None);
    let empirical = TableSet::compute(&data, None).unwrap();
    let n = records.len() as f64;
    let mut checked = 0;
    for kind in StatKind::ALL {
        for (key, &p) in exact.get(kind, Normalization::Record) {
            let q = empirical.get(kind, Normalization::Record).get(key).copied().unwrap_or(0.0);
            let se = (p * (1.0 - p) / n).sqrt().max(1e-12);
            assert!((q - p).abs() <= sigmas * se, "{} {key}: exact {p} empirical {q}", table_name(kind, Normalization::Record));
            checked += 1;
        }
        let (moments, sn, sn2) = visit_moments(records, kind);
        for (key, &p) in exact.get(kind, Normalization::Visit) {
            let q = empirical.get(kind, Normalization::Visit).get(key).copied().unwrap_or(0.0);
            let (sx2, sxn) = moments.get(key).copied().unwrap_or_default();
            let var = (sx2 - 2.0 * p * sxn + p * p * sn2).max(0.0);
            let se = var.sqrt() / sn;
            assert!(
                (q - p).abs() <= sigmas * se.max(1e-12),
                "{} {key}: exact {p} empirical {q} se {se}",
                table_name(kind, Normalization::Visit)
            );
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn zero_continuation_gives_single_visits() {
    let p = ToyParams::independent(vec![0.0; 3], 0.0, 5);
    let records = sample_toy_dataset(&p, 500, 1).unwrap();
    assert!(records.iter().all(|r| r.visits.len() == 1));
}

#[test]
fn zero_logits_give_half_marginals() {
    let p = ToyParams::independent(vec![0.0; 4], 0.5, 3);
    let exact = exact_statistics(&p).unwrap();
    for v in exact.get(StatKind::Unigram, Normalization::Visit).values() {
        assert!((v - 0.5).abs() < 1e-15);
    }
    let records = sample_toy_dataset(&p, 20_000, 2).unwrap();
    let t = TableSet::compute(&CodedDataset::from_records(&records, None), None).unwrap();
    for v in t.get(StatKind::Unigram, Normalization::Visit).values() {
        assert!((v - 0.5).abs() < 0.02);
    }
}

#[test]
fn single_code_single_visit() {
    let p = ToyParams::independent(vec![0.7], 0.0, 1);
    let exact = exact_statistics(&p).unwrap();
    let want = 1.0 / (1.0 + (-0.7f64).exp());
    assert!((exact.get(StatKind::Unigram, Normalization::Record)["code00"] - want).abs() < 1e-15);
}

#[test]
fn independent_codes_factorize_within_a_visit() {
    let p = ToyParams::independent(vec![0.3, -1.2, 0.8], 0.5, 3);
    let exact = exact_statistics(&p).unwrap();
    let uni = exact.get(StatKind::Unigram, Normalization::Visit);
    let pair = exact.get(StatKind::SameVisitBigram, Normalization::Visit);
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        let key = same_visit_key(&p.code_name(a), &p.code_name(b));
        let prod = uni[&p.code_name(a)] * uni[&p.code_name(b)];
        assert!((pair[&key] - prod).abs() < 1e-14);
    }
}

#[test]
fn planted_pair_matches_exact_cooccurrence() {
    let mut p = ToyParams::independent(vec![-1.0, -1.0, 0.0], 0.5, 2);
    p.pair_couplings = vec![PairCoupling { first: 0, second: 1, weight: 4.0 }];
    let exact = exact_statistics(&p).unwrap();
    let records = sample_toy_dataset(&p, 100_000, 3).unwrap();
    let t = TableSet::compute(&CodedDataset::from_records(&records, None), None).unwrap();
    let key = same_visit_key("code00", "code01");
    let want = exact.get(StatKind::SameVisitBigram, Normalization::Record)[&key];
    let got = t.get(StatKind::SameVisitBigram, Normalization::Record)[&key];
    let se = (want * (1.0 - want) / 1e5).sqrt();
    assert!((got - want).abs() <= 3.0 * se, "exact {want} empirical {got}");
}

#[test]
fn monte_carlo_converges_to_exact_tables() {
    let p = coupled_params();
    let exact = exact_statistics(&p).unwrap();
    let records = sample_toy_dataset(&p, 100_000, 4).unwrap();
    assert_within_bands(&exact, &records, 3.0);
}

#[test]
fn exact_tables_are_probabilities_and_deterministic() {
    let p = coupled_params();
    let a = exact_statistics(&p).unwrap();
    assert_eq!(a, exact_statistics(&p).unwrap());
    for table in a.tables.values() {
        assert!(table.values().all(|v| (0.0..=1.0).contains(v)));
    }
    assert_eq!(a.get(StatKind::SequentialVisitBigram, Normalization::Record).len(), 25);
    assert_eq!(a.get(StatKind::SameVisitBigram, Normalization::Visit).len(), 10);
}

#[test]
fn lengths_never_exceed_max_visits() {
    let mut p = coupled_params();
    p.continuation = 0.95;
    let mut r = rng::seeded(5);
    for _ in 0..2000 {
        let rec = sample_toy_record(&p, &mut r);
        assert!(!rec.visits.is_empty() && rec.visits.len() <= p.max_visits);
    }
}

#[test]
fn labs_and_gaps_follow_their_ranges() {
    let mut p = coupled_params();
    p.labs = vec![ToyLab { name: "hb".into(), presence: 0.4, low: 10.0, high: 16.0 }];
    p.gap_days = Some(ToyGap { low: 10.0, high: 20.0 });
    let records = sample_toy_dataset(&p, 5000, 6).unwrap();
    let visits: Vec<_> = records.iter().flat_map(|r| r.visits.iter().enumerate()).collect();
    let present = visits.iter().filter(|(_, v)| v.labs.contains_key("hb")).count() as f64;
    let share = present / visits.len() as f64;
    assert!((share - 0.4).abs() < 4.0 * (0.24 / visits.len() as f64).sqrt());
    for (t, v) in &visits {
        assert_eq!(v.gap_days.is_some(), *t > 0);
        if let Some(g) = v.gap_days {
            assert!((10.0..20.0).contains(&g));
        }
        if let Some(&x) = v.labs.get("hb") {
            assert!((10.0..16.0).contains(&x));
        }
    }
}

#[test]
fn datasets_are_reproducible() {
    let p = coupled_params();
    assert_eq!(sample_toy_dataset(&p, 300, 9).unwrap(), sample_toy_dataset(&p, 300, 9).unwrap());
    assert_ne!(sample_toy_dataset(&p, 300, 9).unwrap(), sample_toy_dataset(&p, 300, 10).unwrap());
}

#[test]
fn exact_bounds_are_enforced() {
    let p = ToyParams::independent(vec![0.0; 13], 0.5, 3);
    assert!(exact_statistics(&p).is_err());
    let p = ToyParams::independent(vec![0.0; 3], 0.5, 4);
    assert!(exact_statistics(&p).is_err());
}

#[test]
fn enumeration_counts_and_uniqueness() {
    assert_eq!(enumerate_matrices(1, 1).unwrap().count(), 2);
    let all: Vec<_> = enumerate_matrices(2, 3).unwrap().collect();
    assert_eq!(all.len(), 64);
    let unique: HashSet<_> = all.iter().cloned().collect();
    assert_eq!(unique.len(), 64);
    assert!(enumerate_matrices(3, 7).is_err());
}
