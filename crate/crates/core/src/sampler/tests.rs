use std::collections::{BTreeMap, BTreeSet};

use super::*;
use crate::halocore::{ModelConfig, Precision};
use crate::recordkit::Discretizer;
use crate::trainer::TrainConfig;

fn small_vocab() -> Vocabulary {
    let medical: BTreeSet<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
    let labels: BTreeSet<String> = ["L"].iter().map(|s| s.to_string()).collect();
    Vocabulary::from_parts(3, medical, labels, Discretizer::default()).unwrap()
}

fn model(vocab: &Vocabulary, mode: Mode, max_visits: usize, std: f64) -> HaloModel<f64> {
    let mut cfg = ModelConfig::tiny(vocab.len(), max_visits).with_mode(mode);
    cfg.init_std = std;
    HaloModel::new(cfg, 11).unwrap()
}

fn check_shape(m: &RecordMatrix, vocab: &Vocabulary, max_visits: usize) {
    let kinds = vocab.kinds_by_column();
    let end = vocab.end_column();
    let last = m.true_rows() - 1;
    assert!(m.true_rows() >= 3 && m.true_rows() <= max_visits + 3);
    for c in 0..vocab.len() {
        assert_eq!(m.get(0, c), c == vocab.start_column());
        if m.get(1, c) {
            assert_eq!(kinds[c], CodeKind::Label);
        }
        for t in 2..m.true_rows() {
            if m.get(t, c) {
                assert!(sampled_in_visit(kinds[c]));
            }
        }
    }
    assert!(m.get(last, end));
    assert!((2..last).all(|t| !m.get(t, end)));
}

#[test]
fn generated_matrices_are_well_formed() {
    let vocab = small_vocab();
    for mode in [Mode::Full, Mode::CoarseOnly] {
        let m = model(&vocab, mode, 4, 0.5);
        let s = Sampler::new(&m, &vocab, 4).unwrap();
        let mut r = rng::seeded(1);
        for _ in 0..200 {
            check_shape(&s.generate_matrix(None, &mut r).unwrap(), &vocab, 4);
        }
    }
}

#[test]
fn condition_fixes_label_row() {
    let vocab = small_vocab();
    let m = model(&vocab, Mode::Full, 3, 0.5);
    let s = Sampler::new(&m, &vocab, 3).unwrap();
    let cond: BTreeSet<String> = ["L".to_string()].into();
    let recs = s.generate_dataset(50, Some(&cond), 4).unwrap();
    assert!(recs.iter().all(|r| r.labels == cond));
    let empty = BTreeSet::new();
    let recs = s.generate_dataset(20, Some(&empty), 4).unwrap();
    assert!(recs.iter().all(|r| r.labels.is_empty()));

    let bad: BTreeSet<String> = ["a".to_string()].into();
    assert!(matches!(s.generate_dataset(5, Some(&bad), 4), Err(HaloError::UnknownCode(_))));
    let missing: BTreeSet<String> = ["zz".to_string()].into();
    assert!(s.generate_dataset(5, Some(&missing), 4).is_err());
}

#[test]
fn dataset_is_seeded_and_named() {
    let vocab = small_vocab();
    let m = model(&vocab, Mode::Full, 3, 0.5);
    let s = Sampler::new(&m, &vocab, 3).unwrap();
    let a = s.generate_dataset(30, None, 9).unwrap();
    assert_eq!(a, s.generate_dataset(30, None, 9).unwrap());
    assert_ne!(a, s.generate_dataset(30, None, 10).unwrap());
    assert_eq!(a[7].patient_id, "synth000007");
    assert!(s.generate_dataset(0, None, 9).is_err());
}

#[test]
fn dominant_end_bias_gives_empty_records() {
    let vocab = small_vocab();
    let end = vocab.end_column();
    for mode in [Mode::Full, Mode::CoarseOnly] {
        let mut m = model(&vocab, mode, 3, 0.02);
        let (w, b, offset) = match mode {
            Mode::Full => {
                let (w, b) = *m.layout().fine.last().unwrap();
                (w, b, m.config().n_emb)
            }
            Mode::CoarseOnly => {
                let (w, b) = m.layout().head.unwrap();
                (w, b, 0)
            }
        };
        let (wlen, c) = (b - w, vocab.len());
        let p = m.params_mut();
        p[w..w + wlen].iter_mut().for_each(|x| *x = 0.0);
        for col in 0..c {
            p[b + offset + col] = if col == end { 60.0 } else { -60.0 };
        }
        let s = Sampler::new(&m, &vocab, 3).unwrap();
        let recs = s.generate_dataset(40, None, 2).unwrap();
        assert!(recs.iter().all(|r| r.visits.is_empty() && r.labels.is_empty()));
    }
}

/// Every matrix the sampler can return for a one-visit cap, with a
/// probability computed directly from per-position logits.
fn enumerate_outcomes(s: &Sampler<f64>, vocab: &Vocabulary) -> Vec<(RecordMatrix, f64)> {
    let n = vocab.len();
    let kinds = vocab.kinds_by_column();
    let label: Vec<usize> = (0..n).filter(|&c| kinds[c] == CodeKind::Label).collect();
    let visit: Vec<usize> = (0..n).filter(|&c| sampled_in_visit(kinds[c])).collect();
    let mut out = Vec::new();
    for lm in 0..1usize << label.len() {
        for vm in 0..1usize << visit.len() {
            let mut rows = vec![vec![0u8; n]; 3];
            rows[0][vocab.start_column()] = 1;
            for (i, &c) in label.iter().enumerate() {
                rows[1][c] = (lm >> i & 1) as u8;
            }
            for (i, &c) in visit.iter().enumerate() {
                rows[2][c] = (vm >> i & 1) as u8;
            }
            let ended = rows[2][vocab.end_column()] == 1;
            let mut p = 1.0;
            for t in 1..3 {
                let prefix: Vec<&[u8]> = rows[..t].iter().map(|r| r.as_slice()).collect();
                let trace = s.model.coarse_trace(&prefix).unwrap();
                let cols = if t == 1 { &label } else { &visit };
                for &c in cols {
                    let z = s.model.code_logit(&s.fine, trace.history_row(t - 1), &rows[t], c);
                    let q = 1.0 / (1.0 + (-z).exp());
                    p *= if rows[t][c] == 1 { q } else { 1.0 - q };
                }
            }
            if !ended {
                let mut e = vec![0u8; n];
                e[vocab.end_column()] = 1;
                rows.push(e);
            }
            let tr = rows.len();
            out.push((RecordMatrix::from_rows(rows, n, tr).unwrap(), p));
        }
    }
    out
}

#[test]
fn generation_log_prob_matches_enumeration_and_frequencies() {
    let vocab = small_vocab();
    let m = model(&vocab, Mode::Full, 1, 0.6);
    let s = Sampler::new(&m, &vocab, 1).unwrap();
    let outcomes = enumerate_outcomes(&s, &vocab);
    assert_eq!(outcomes.len(), 16);
    let total: f64 = outcomes.iter().map(|o| o.1).sum();
    assert!((total - 1.0).abs() < 1e-12);
    for (mat, p) in &outcomes {
        let lp = s.generation_log_prob(mat, false).unwrap();
        assert!((lp.exp() - p).abs() < 1e-12, "{} vs {p}", lp.exp());
    }

    let n = 40_000;
    let mut counts: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
    let mut r = rng::seeded(5);
    for _ in 0..n {
        let mat = s.generate_matrix(None, &mut r).unwrap();
        *counts.entry(mat.data().to_vec()).or_default() += 1;
    }
    for (mat, p) in &outcomes {
        let k = counts.get(mat.data()).copied().unwrap_or(0) as f64;
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((k / n as f64 - p).abs() <= 4.0 * sd + 1e-12, "{k} vs {p}");
    }
    assert_eq!(counts.values().sum::<usize>(), n);
    assert!(counts.keys().all(|d| outcomes.iter().any(|(m, _)| m.data() == d.as_slice())));
}

#[test]
fn fixed_shape_sampling_matches_log_prob() {
    let vocab = small_vocab();
    let n = vocab.len();
    let start = vocab.start_column();
    let free = |t: usize, c: usize| t >= 1 && c != start;
    for mode in [Mode::Full, Mode::CoarseOnly] {
        let m = model(&vocab, mode, 2, 0.6);
        let mut first = vec![0u8; n];
        first[start] = 1;
        let mut r = rng::seeded(3);
        let draws = 20_000;
        let mut counts: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
        for _ in 0..draws {
            let mat = sample_fixed_shape(&m, &first, 3, free, &mut r).unwrap();
            *counts.entry(mat.data().to_vec()).or_default() += 1;
        }
        let cols: Vec<usize> = (0..n).filter(|&c| c != start).collect();
        let bits = 2 * cols.len();
        let mut total = 0.0;
        for mask in 0..1usize << bits {
            let mut rows = vec![first.clone(), vec![0u8; n], vec![0u8; n]];
            for i in 0..bits {
                rows[1 + i / cols.len()][cols[i % cols.len()]] = (mask >> i & 1) as u8;
            }
            let mat = RecordMatrix::from_rows(rows, n, 3).unwrap();
            let p = m.log_prob_where(&mat, free).unwrap().exp();
            total += p;
            let k = counts.remove(mat.data()).unwrap_or(0) as f64;
            if p * draws as f64 >= 10.0 {
                let sd = (p * (1.0 - p) / draws as f64).sqrt();
                assert!((k / draws as f64 - p).abs() <= 4.5 * sd, "{mode:?} {k} {p}");
            }
        }
        assert!((total - 1.0).abs() < 1e-12);
        assert!(counts.is_empty());
    }
}

#[test]
fn checkpoint_generation_checks_vocabulary() {
    let vocab = small_vocab();
    let mut cfg = ModelConfig::tiny(vocab.len(), 3);
    cfg.precision = Precision::F32;
    let m = HaloModel::<f32>::new(cfg, 1).unwrap();
    let ck = Checkpoint::from_model(&m, &vocab.content_hash(), TrainConfig::default(), 0, 0.0);
    let recs = generate_dataset(&ck, &vocab, 10, None, 1).unwrap();
    assert_eq!(recs.len(), 10);
    let other = Vocabulary::from_parts(4, ["a".into(), "c".into()].into(), ["L".into()].into(), Discretizer::default()).unwrap();
    assert!(matches!(generate_dataset(&ck, &other, 10, None, 1), Err(HaloError::HashMismatch { .. })));
}

#[test]
fn rejects_mismatched_vocabulary_and_cap() {
    let vocab = small_vocab();
    let m = model(&vocab, Mode::Full, 2, 0.1);
    assert!(Sampler::new(&m, &vocab, 3).is_err());
    let other = Vocabulary::from_parts(4, ["a".into()].into(), ["L".into()].into(), Discretizer::default()).unwrap();
    assert!(Sampler::new(&m, &other, 2).is_err());
}
