//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any criterion fails.
//!
//! Criteria 1-5 exercise the library on tiny models with exact answers.
//! Criteria 6-12 drive the `halo` binary through a full toy-cohort run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use halo_core::halocore::{random_batch, HaloModel, Mode, ModelConfig};
use halo_core::recordkit::{encode_record, BucketConfig, RecordMatrix, Vocabulary};
use halo_core::rng::{self, Rng};
use halo_core::sampler::sample_fixed_shape;
use halo_core::toycohort::{sample_toy_dataset, ToyParams};
use halo_core::trainer::{evaluate_test, perplexity_per_code, perplexity_root_form};
use halo_core::HaloModel64;
use serde_json::Value;

const COHORT_SIZE: usize = 5000;
const SYNTHETIC_SIZE: usize = 5000;
const CONDITIONED_SIZE: usize = 5000;
const PRIVACY_N: usize = 1000;
const DATA_SEED: u64 = 1;
const SAMPLE_SEED: u64 = 3;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

fn report(results: &mut Vec<bool>, id: usize, name: &str, outcome: Outcome) {
    let tag = if outcome.pass { "PASS" } else { "FAIL" };
    println!("{tag} {id:>2} {name}: {}", outcome.detail);
    results.push(outcome.pass);
}

fn below(rng: &mut Rng, n: usize) -> usize {
    ((rng::unit(rng) * n as f64) as usize).min(n - 1)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Tiny model over five columns: 0 = start, 4 = end, 1..=3 free.
fn five_column_model(mode: Mode, seed: u64) -> HaloModel64 {
    let mut c = ModelConfig::tiny(5, 1).with_mode(mode);
    c.init_std = 0.8;
    HaloModel::new(c, seed).unwrap()
}

fn free_cell(t: usize, i: usize) -> bool {
    (1..=2).contains(&t) && (1..=3).contains(&i)
}

/// Matrix with the start row and the two generated rows taken from the
/// low six bits of `outcome`, row-major.
fn completion(outcome: usize) -> RecordMatrix {
    let mut m = RecordMatrix::zeros(3, 5, 3);
    m.set(0, 0, true);
    for bit in 0..6 {
        m.set(1 + bit / 3, 1 + bit % 3, outcome >> bit & 1 == 1);
    }
    m
}

fn outcome_index(m: &RecordMatrix) -> usize {
    (0..6).filter(|&bit| m.get(1 + bit / 3, 1 + bit % 3)).map(|bit| 1 << bit).sum()
}

/// Probability of the free cells of `m` as a product of forward outputs.
fn product_probability(model: &HaloModel64, m: &RecordMatrix) -> f64 {
    let o = model.model_forward(m).unwrap();
    let mut p = 1.0;
    for t in 1..m.true_rows() {
        for i in 0..m.cols() {
            if free_cell(t, i) {
                let q = o.get(t - 1, i);
                p *= if m.get(t, i) { q } else { 1.0 - q };
            }
        }
    }
    p
}

fn normalization() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (mode, seed) in [(Mode::Full, 11), (Mode::CoarseOnly, 12)] {
        let model = five_column_model(mode, seed);
        let (mut by_log, mut by_product) = (0.0, 0.0);
        for outcome in 0..64 {
            let m = completion(outcome);
            by_log += model.log_prob_where(&m, free_cell).unwrap().exp();
            by_product += product_probability(&model, &m);
        }
        worst = worst.max((by_log - 1.0).abs()).max((by_product - 1.0).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(worst <= 1e-9 && secs < 1.0, format!("max |sum - 1| = {worst:.2e} over 64 completions, {secs:.3} s"))
}

fn perturbation_violations(model: &HaloModel64, trials: usize, seed: u64) -> usize {
    let cols = model.config().vocab_size;
    let rows_max = model.config().rows_max();
    let coarse = model.config().mode == Mode::CoarseOnly;
    let mut r = rng::seeded(seed);
    let mut violations = 0;
    for _ in 0..trials {
        let rows = 2 + below(&mut r, rows_max - 1);
        let mut m = RecordMatrix::zeros(rows, cols, rows);
        for t in 0..rows {
            for c in 0..cols {
                m.set(t, c, rng::bernoulli(&mut r, 0.4));
            }
        }
        let t = below(&mut r, rows - 1);
        let i = below(&mut r, cols);
        let mut flipped = m.clone();
        for tt in t + 2..rows {
            for c in 0..cols {
                if rng::bernoulli(&mut r, 0.5) {
                    flipped.set(tt, c, !flipped.get(tt, c));
                }
            }
        }
        let first = if coarse { 0 } else { i };
        for c in first..cols {
            if rng::bernoulli(&mut r, 0.5) {
                flipped.set(t + 1, c, !flipped.get(t + 1, c));
            }
        }
        let a = model.model_forward(&m).unwrap().get(t, i);
        let b = model.model_forward(&flipped).unwrap().get(t, i);
        if a.to_bits() != b.to_bits() {
            violations += 1;
        }
    }
    violations
}

fn masking() -> Outcome {
    let mut parts = Vec::new();
    let mut total = 0;
    for (mode, seed) in [(Mode::Full, 21), (Mode::CoarseOnly, 22)] {
        let mut c = ModelConfig::tiny(7, 3).with_mode(mode);
        c.init_std = 0.5;
        let model = HaloModel64::new(c, seed).unwrap();
        let v = perturbation_violations(&model, 1000, seed + 100);
        total += v;
        parts.push(format!("{mode:?} {v}/1000"));
    }
    Outcome::new(total == 0, format!("violations {}", parts.join(", ")))
}

fn gradient() -> Outcome {
    let start = Instant::now();
    let mut config = ModelConfig::tiny(7, 3);
    config.init_std = 0.5;
    let mut model = HaloModel64::new(config.clone(), 7).unwrap();
    let batch = random_batch(&config, 5, 0.35, 107);
    let (_, analytic) = model.loss_and_grad(&batch).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..model.n_params() {
        let orig = model.params()[k];
        model.params_mut()[k] = orig + h;
        let up = model.training_loss(&batch).unwrap();
        model.params_mut()[k] = orig - h;
        let down = model.training_loss(&batch).unwrap();
        model.params_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        let rel = (analytic[k] - numeric).abs() / analytic[k].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        worst < 1e-4 && secs < 120.0,
        format!("max relative error {worst:.2e} over {} parameters, {secs:.1} s", model.n_params()),
    )
}

fn sampler_consistency() -> Outcome {
    let start = Instant::now();
    let model = five_column_model(Mode::Full, 31);
    let first = [1u8, 0, 0, 0, 0];
    let n = 1_000_000usize;
    let mut counts = [0usize; 64];
    let mut r = rng::seeded(32);
    for _ in 0..n {
        let m = sample_fixed_shape(&model, &first, 3, free_cell, &mut r).unwrap();
        counts[outcome_index(&m)] += 1;
    }
    let mut worst_z: f64 = 0.0;
    let mut total_p = 0.0;
    for (outcome, &count) in counts.iter().enumerate() {
        let p = model.log_prob_where(&completion(outcome), free_cell).unwrap().exp();
        total_p += p;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        worst_z = worst_z.max((count as f64 - n as f64 * p).abs() / sd);
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        worst_z <= 4.0 && (total_p - 1.0).abs() < 1e-9 && secs < 300.0,
        format!("max |z| {worst_z:.2} over 64 outcomes from {n} samples, {secs:.1} s"),
    )
}

fn perplexity_identity() -> Outcome {
    let params = ToyParams::load(&configs().join("toy_cohort.json")).unwrap();
    let records = sample_toy_dataset(&params, 10, 41).unwrap();
    let vocab = Vocabulary::build(&records, &BucketConfig::default(), 41).unwrap();
    let matrices: Vec<RecordMatrix> =
        records.iter().map(|r| encode_record(r, &vocab, params.max_visits).unwrap()).collect();
    let mut c = ModelConfig::tiny(vocab.len(), params.max_visits);
    c.init_std = 0.1;
    let model = HaloModel64::new(c, 42).unwrap();
    let log_probs: Vec<f64> = matrices.iter().map(|m| model.record_log_prob(m).unwrap()).collect();
    let probs: Vec<f64> = log_probs.iter().map(|lp| lp.exp()).collect();
    let present: usize =
        matrices.iter().map(|m| (1..m.true_rows()).map(|t| m.row(t).iter().filter(|&&b| b != 0).count()).sum::<usize>()).sum();
    let log_form = perplexity_per_code(&log_probs, present).unwrap();
    let root_form = perplexity_root_form(&probs, present).unwrap();
    let metrics = evaluate_test(&model, &matrices).unwrap();
    let rel = (log_form - root_form).abs() / log_form;
    let rel_metrics = (metrics.pp_per_code - log_form).abs() / log_form;
    let hand = perplexity_root_form(&[0.25], 2).unwrap();
    let hand_log = perplexity_per_code(&[0.25f64.ln()], 2).unwrap();
    Outcome::new(
        rel <= 1e-6 && rel_metrics <= 1e-6 && metrics.n_present == present && hand == 2.0 && (hand_log - 2.0).abs() < 1e-12,
        format!("pp {log_form:.6} vs {root_form:.6} (rel {rel:.1e}) on 10 records, {present} codes; hand case {hand}"),
    )
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn halo(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_halo")).args(args).output().expect("run halo");
    if !out.status.success() {
        panic!("halo {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr));
    }
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Artifacts of the recovery run.
struct Run {
    dir: PathBuf,
    train_secs: f64,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn data(&self, name: &str) -> PathBuf {
        self.dir.join("data").join(name)
    }
}

fn toy_gen(out: &Path) {
    let params = configs().join("toy_cohort.json");
    let n = COHORT_SIZE.to_string();
    halo(&["toy-gen", "--params", s(&params), "--n", &n, "--out", s(out), "--seed", &DATA_SEED.to_string()]);
}

fn prepare(records: &Path, out_dir: &Path) {
    let params = ToyParams::load(&configs().join("toy_cohort.json")).unwrap();
    let mv = params.max_visits.to_string();
    halo(&["prepare", "--records", s(records), "--max-visits", &mv, "--out-dir", s(out_dir), "--seed", &DATA_SEED.to_string()]);
}

fn train(data: &Path, out_dir: &Path, extra: &[&str]) {
    let model = configs().join("desk_model.json");
    let config = configs().join("recovery_train.json");
    let mut args = vec!["train", "--data", s(data), "--model", s(&model), "--config", s(&config), "--out-dir", s(out_dir)];
    args.extend_from_slice(extra);
    halo(&args);
}

fn generate(run: &Run, checkpoint: &str, n: usize, seed: u64, condition: Option<&str>, out: &Path) {
    let ck = run.path(checkpoint).join("checkpoint.bin");
    let vocab = run.data("vocab.json");
    let (n, seed) = (n.to_string(), seed.to_string());
    let mut args = vec!["generate", "--checkpoint", s(&ck), "--vocab", s(&vocab), "--n", &n, "--seed", &seed, "--out", s(out)];
    if let Some(c) = condition {
        args.extend_from_slice(&["--condition", c]);
    }
    halo(&args);
}

fn eval_model(run: &Run, checkpoint: &str, out: &Path) {
    let ck = run.path(checkpoint).join("checkpoint.bin");
    let (vocab, test) = (run.data("vocab.json"), run.data("test.jsonl"));
    halo(&["eval-model", "--checkpoint", s(&ck), "--vocab", s(&vocab), "--test", s(&test), "--out", s(out)]);
}

fn eval_stats(run: &Run, synthetic: &Path, out_dir: &Path) {
    let (train, vocab) = (run.data("train.jsonl"), run.data("vocab.json"));
    halo(&["eval-stats", s(&train), s(synthetic), "--vocab", s(&vocab), "--out-dir", s(out_dir)]);
}

fn eval_privacy(run: &Run, synthetic: &Path, with_model: bool, out: &Path) {
    let (train, heldout, vocab) = (run.data("train.jsonl"), run.data("test.jsonl"), run.data("vocab.json"));
    let ck = run.path("full").join("checkpoint.bin");
    let n = PRIVACY_N.to_string();
    let max_visits = json(&run.data("manifest.json"))["max_visits"].to_string();
    let mut args = vec![
        "eval-privacy", "--train", s(&train), "--heldout", s(&heldout), "--synthetic", s(synthetic), "--vocab", s(&vocab),
        "--n", &n, "--out", s(out), "--seed", "0",
    ];
    if with_model {
        args.extend_from_slice(&["--checkpoint", s(&ck)]);
    } else {
        args.extend_from_slice(&["--max-visits", &max_visits]);
    }
    halo(&args);
}

fn recovery_run(dir: PathBuf) -> Run {
    let start = Instant::now();
    toy_gen(&dir.join("records.jsonl"));
    prepare(&dir.join("records.jsonl"), &dir.join("data"));
    train(&dir.join("data"), &dir.join("full"), &[]);
    let mut run = Run { dir, train_secs: 0.0 };
    generate(&run, "full", SYNTHETIC_SIZE, SAMPLE_SEED, None, &run.path("synthetic.jsonl"));
    run.train_secs = start.elapsed().as_secs_f64();
    train(&run.path("data"), &run.path("coarse"), &["--coarse-only"]);
    eval_stats(&run, &run.path("synthetic.jsonl"), &run.path("stats"));
    eval_model(&run, "full", &run.path("full_metrics.json"));
    eval_model(&run, "coarse", &run.path("coarse_metrics.json"));
    eval_privacy(&run, &run.path("synthetic.jsonl"), true, &run.path("privacy.json"));
    eval_privacy(&run, &run.data("train.jsonl"), false, &run.path("privacy_copy.json"));
    generate(&run, "full", CONDITIONED_SIZE, 4, Some("label=label0"), &run.path("with_label0.jsonl"));
    generate(&run, "full", CONDITIONED_SIZE, 5, Some("label="), &run.path("without_labels.jsonl"));
    run
}

fn recovery(run: &Run) -> Outcome {
    let r2 = &json(&run.path("stats/stats_report.json"))["r2"];
    let get = |k: &str| r2[k].as_f64().unwrap_or(f64::NAN);
    let thresholds = [
        ("unigram_record", 0.9),
        ("seq_bigram_record", 0.7),
        ("seq_bigram_visit", 0.7),
        ("covis_bigram_record", 0.7),
        ("covis_bigram_visit", 0.7),
    ];
    let pass = thresholds.iter().all(|&(k, min)| get(k) >= min) && run.train_secs <= 1800.0;
    let shown: Vec<String> = thresholds.iter().map(|&(k, _)| format!("{k} {:.3}", get(k))).collect();
    Outcome::new(pass, format!("{}; train+generate {:.0} s", shown.join(", "), run.train_secs))
}

fn ablation(run: &Run) -> Outcome {
    let full = json(&run.path("full_metrics.json"))["pp_per_code"].as_f64().unwrap();
    let coarse = json(&run.path("coarse_metrics.json"))["pp_per_code"].as_f64().unwrap();
    let gain = (coarse - full) / coarse;
    Outcome::new(full < coarse && gain >= 0.02, format!("pp per code full {full:.4} vs coarse {coarse:.4} ({:.1}% lower)", 100.0 * gain))
}

fn aggregate_shape(run: &Run) -> Outcome {
    let report = json(&run.path("stats/stats_report.json"));
    let mut pass = true;
    let mut parts = Vec::new();
    for stat in ["record_length", "visit_length"] {
        let real = report["real"]["aggregate"][stat]["mean"].as_f64().unwrap();
        let synth = report["synthetic"]["aggregate"][stat]["mean"].as_f64().unwrap();
        let rel = (synth - real).abs() / real;
        pass &= rel <= 0.10;
        parts.push(format!("{stat} {synth:.3} vs {real:.3} ({:.1}%)", 100.0 * rel));
    }
    Outcome::new(pass, parts.join(", "))
}

fn privacy(run: &Run) -> Outcome {
    let p = json(&run.path("privacy.json"));
    let copy = json(&run.path("privacy_copy.json"));
    let f = |v: &Value| v.as_f64().unwrap();
    let model_acc = f(&p["model_attack"]["accuracy"]);
    let dataset_acc = f(&p["dataset_attack"]["accuracy"]);
    let f1_synth = f(&p["attribute_synthetic"]["f1"]);
    let f1_real = f(&p["attribute_real"]["f1"]);
    let nnaa = f(&p["nnaa"]["nnaa"]);
    let copy_acc = f(&copy["dataset_attack"]["accuracy"]);
    let copy_nnaa = f(&copy["nnaa"]["nnaa"]);
    let near_chance = |a: f64| (0.45..=0.55).contains(&a);
    let checks = [
        near_chance(model_acc),
        near_chance(dataset_acc),
        f1_synth <= f1_real,
        nnaa < 0.03,
        copy_acc == 1.0,
        (copy_nnaa - 0.5).abs() <= 0.05,
    ];
    Outcome::new(
        checks.iter().all(|&c| c),
        format!(
            "model attack {model_acc:.3}, dataset attack {dataset_acc:.3}, attribute F1 {f1_synth:.4} vs real {f1_real:.4}, \
             nnaa {nnaa:.4}; copy: dataset attack {copy_acc:.3}, nnaa {copy_nnaa:.4}"
        ),
    )
}

fn continuous(run: &Run) -> Outcome {
    let report = json(&run.path("stats/stats_report.json"));
    let (real, synth) = (&report["real"]["continuous"], &report["synthetic"]["continuous"]);
    let n_real = real["n_visits"].as_f64().unwrap();
    let n_synth = synth["n_visits"].as_f64().unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for var in ["glucose", "gap_days"] {
        let (r, sy) = (&real["variables"][var], &synth["variables"][var]);
        let (pr, ps) = (r["presence"].as_f64().unwrap(), sy["presence"].as_f64().unwrap());
        let sd = (pr * (1.0 - pr) / n_real + ps * (1.0 - ps) / n_synth).sqrt();
        let z = (ps - pr).abs() / sd;
        let (mr, ms) = (r["mean"].as_f64().unwrap(), sy["mean"].as_f64().unwrap());
        let rel = (ms - mr).abs() / mr;
        pass &= z <= 3.0 && rel <= 0.05;
        parts.push(format!("{var} presence {ps:.4} vs {pr:.4} ({z:.1} sd), mean {ms:.2} vs {mr:.2} ({:.1}%)", 100.0 * rel));
    }
    Outcome::new(pass, parts.join("; "))
}

/// Record-level presence of `code` under the toy process, with the label
/// term switched on or off. Exact only for a code with no couplings.
fn toy_record_presence(params: &ToyParams, code: usize, label: usize, on: bool) -> f64 {
    let logit = params.base_logits[code] + if on { params.label_weight(label, code) } else { 0.0 };
    let p = sigmoid(logit);
    params.length_distribution().iter().enumerate().map(|(i, q)| q * (1.0 - (1.0 - p).powi(i as i32 + 1))).sum()
}

fn is_independent_of_history(params: &ToyParams, code: usize) -> bool {
    let coupled = params.pair_couplings.iter().any(|c| c.second == code);
    let sequential = (0..params.n_codes).any(|prev| params.visit_weight(prev, code) != 0.0);
    let other_labels = (1..params.n_labels).any(|l| params.label_weight(l, code) != 0.0);
    !coupled && !sequential && !other_labels
}

fn read_jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn conditional(run: &Run) -> Outcome {
    let params = ToyParams::load(&configs().join("toy_cohort.json")).unwrap();
    let (label, code) = (0, 5);
    let (label_id, code_id) = (params.label_name(label), params.code_name(code));
    if !is_independent_of_history(&params, code) {
        return Outcome::new(false, format!("{code_id} has couplings; exact oracle unavailable"));
    }
    let with = read_jsonl(&run.path("with_label0.jsonl"));
    let without = read_jsonl(&run.path("without_labels.jsonl"));
    let all_labeled = with.iter().all(|r| r["labels"].as_array().unwrap().iter().any(|l| l == label_id.as_str()));
    let none_labeled = without.iter().all(|r| r["labels"].as_array().unwrap().is_empty());
    let presence = |recs: &[Value]| {
        let hits = recs
            .iter()
            .filter(|r| r["visits"].as_array().unwrap().iter().any(|v| v["codes"].as_array().unwrap().iter().any(|c| c == code_id.as_str())))
            .count();
        hits as f64 / recs.len() as f64
    };
    let (p1, p0) = (presence(&with), presence(&without));
    let (e1, e0) = (toy_record_presence(&params, code, label, true), toy_record_presence(&params, code, label, false));
    let sd = (e1 * (1.0 - e1) / with.len() as f64 + e0 * (1.0 - e0) / without.len() as f64).sqrt();
    let (gap, exact_gap) = (p1 - p0, e1 - e0);
    Outcome::new(
        all_labeled && none_labeled && gap >= exact_gap - 3.0 * sd,
        format!(
            "{} of {} records carry {label_id}; {code_id} presence {p1:.4} vs {p0:.4}, gap {gap:.4} (exact {exact_gap:.4}, 3 sd {:.4})",
            with.iter().filter(|r| r["labels"].as_array().unwrap().iter().any(|l| l == label_id.as_str())).count(),
            with.len(),
            3.0 * sd
        ),
    )
}

fn same_bytes(a: &Path, b: &Path) -> bool {
    fs::read(a).unwrap() == fs::read(b).unwrap()
}

fn determinism(run: &Run) -> Outcome {
    let again = run.path("again");
    fs::create_dir_all(&again).unwrap();
    let mut stages: BTreeMap<&str, bool> = BTreeMap::new();

    toy_gen(&again.join("records.jsonl"));
    stages.insert("toy-gen", same_bytes(&run.path("records.jsonl"), &again.join("records.jsonl")));

    prepare(&run.path("records.jsonl"), &again.join("data"));
    let prepared = ["vocab.json", "train.jsonl", "val.jsonl", "test.jsonl", "manifest.json"]
        .iter()
        .all(|f| same_bytes(&run.data(f), &again.join("data").join(f)));
    stages.insert("prepare", prepared);

    let short = ["--epochs", "2"];
    train(&run.path("data"), &again.join("short_a"), &short);
    train(&run.path("data"), &again.join("short_b"), &short);
    let trained = ["checkpoint.bin", "training_log.csv"]
        .iter()
        .all(|f| same_bytes(&again.join("short_a").join(f), &again.join("short_b").join(f)));
    stages.insert("train", trained);

    generate(run, "full", SYNTHETIC_SIZE, SAMPLE_SEED, None, &again.join("synthetic.jsonl"));
    stages.insert("generate", same_bytes(&run.path("synthetic.jsonl"), &again.join("synthetic.jsonl")));

    eval_stats(run, &run.path("synthetic.jsonl"), &again.join("stats"));
    let stats = fs::read_dir(run.path("stats")).unwrap().all(|e| {
        let name = e.unwrap().file_name();
        same_bytes(&run.path("stats").join(&name), &again.join("stats").join(&name))
    });
    stages.insert("eval-stats", stats);

    eval_model(run, "full", &again.join("full_metrics.json"));
    stages.insert("eval-model", same_bytes(&run.path("full_metrics.json"), &again.join("full_metrics.json")));

    eval_privacy(run, &run.path("synthetic.jsonl"), true, &again.join("privacy.json"));
    stages.insert("eval-privacy", same_bytes(&run.path("privacy.json"), &again.join("privacy.json")));

    let probe = |out: &Path| {
        let (synth, test, vocab) = (run.path("synthetic.jsonl"), run.data("test.jsonl"), run.data("vocab.json"));
        halo(&["probe-utility", "--train", s(&synth), "--test", s(&test), "--label", "label0", "--vocab", s(&vocab), "--out", s(out)]);
    };
    probe(&run.path("probe.json"));
    probe(&again.join("probe.json"));
    stages.insert("probe-utility", same_bytes(&run.path("probe.json"), &again.join("probe.json")));

    let check = |out: &Path| {
        let tiny = configs().join("tiny_model.json");
        halo(&["gradcheck", "--seed", "7", "--model", s(&tiny), "--out", s(out)]);
    };
    check(&run.path("gradcheck.json"));
    check(&again.join("gradcheck.json"));
    stages.insert("gradcheck", same_bytes(&run.path("gradcheck.json"), &again.join("gradcheck.json")));

    let failed: Vec<&str> = stages.iter().filter(|(_, &ok)| !ok).map(|(&k, _)| k).collect();
    let detail = if failed.is_empty() {
        format!("{} stages byte-identical", stages.len())
    } else {
        format!("differs: {}", failed.join(", "))
    };
    Outcome::new(failed.is_empty(), detail)
}

fn main() -> ExitCode {
    let mut results = Vec::new();
    report(&mut results, 1, "normalization", normalization());
    report(&mut results, 2, "autoregressive masking", masking());
    report(&mut results, 3, "gradient check", gradient());
    report(&mut results, 4, "sampler matches likelihood", sampler_consistency());
    report(&mut results, 5, "perplexity identity", perplexity_identity());

    let work = tempfile::tempdir().unwrap();
    let run = recovery_run(work.path().to_path_buf());
    report(&mut results, 6, "statistical recovery", recovery(&run));
    report(&mut results, 7, "code-level ablation", ablation(&run));
    report(&mut results, 8, "aggregate shape", aggregate_shape(&run));
    report(&mut results, 9, "privacy battery", privacy(&run));
    report(&mut results, 10, "continuous variables", continuous(&run));
    report(&mut results, 11, "conditional generation", conditional(&run));
    report(&mut results, 12, "determinism", determinism(&run));

    let failed = results.iter().filter(|&&p| !p).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
