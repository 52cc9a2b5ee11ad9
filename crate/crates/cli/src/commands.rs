use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{bail, Context, Result};
use halo_core::halocore::{model_gradient_check, Mode, Precision};
use halo_core::privacy::{evaluate_privacy, PrivacyConfig};
use halo_core::recordkit::{encode_record, load_records, save_records, split_dataset, Record, RecordMatrix, Vocabulary};
use halo_core::sampler::generate_dataset;
use halo_core::statseval::{utility_probe, ProbeConfig, StatsConfig, StatsReport};
use halo_core::toycohort::{sample_toy_dataset, ToyParams};
use halo_core::trainer::{evaluate_test, train, write_training_log, Checkpoint, TrainConfig};
use rayon::prelude::*;

use crate::config::{read_json, read_or_default, write_json, Manifest, ModelSpec, PrepareConfig};
use crate::{Cli, Command, NumericalFailure, UsageError};

pub fn run(cli: &Cli) -> Result<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::ToyGen(a) => toy_gen(a, seed),
        Command::Prepare(a) => prepare(a, seed),
        Command::Train(a) => train_cmd(a, seed),
        Command::Generate(a) => generate(a, seed),
        Command::EvalModel(a) => eval_model(a),
        Command::EvalStats(a) => eval_stats(a),
        Command::EvalPrivacy(a) => eval_privacy(a, seed),
        Command::ProbeUtility(a) => probe(a, seed),
        Command::Gradcheck(a) => gradcheck(a, seed),
    }
}

fn records(path: &Path) -> Result<Vec<Record>> {
    load_records(path).with_context(|| format!("cannot load records from {}", path.display()))
}

fn vocabulary(path: &Path) -> Result<Vocabulary> {
    Vocabulary::load(path).with_context(|| format!("cannot load vocabulary {}", path.display()))
}

fn checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("cannot load checkpoint {}", path.display()))
}

fn save(records: &[Record], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_records(records, path).with_context(|| format!("cannot write {}", path.display()))
}

fn encode_all(records: &[Record], vocab: &Vocabulary, max_visits: usize) -> Result<Vec<RecordMatrix>> {
    Ok(records.par_iter().map(|r| encode_record(r, vocab, max_visits)).collect::<halo_core::Result<_>>()?)
}

fn toy_gen(a: &crate::ToyGenArgs, seed: Option<u64>) -> Result<()> {
    let params = ToyParams::load(&a.params).with_context(|| format!("invalid toy parameters {}", a.params.display()))?;
    if a.n == 0 {
        bail!(UsageError("--n must be at least 1".into()));
    }
    let recs = sample_toy_dataset(&params, a.n, seed.unwrap_or(0))?;
    save(&recs, &a.out)?;
    println!("wrote {} records to {}", recs.len(), a.out.display());
    Ok(())
}

fn prepare(a: &crate::PrepareArgs, seed: Option<u64>) -> Result<()> {
    let mut cfg: PrepareConfig = read_or_default(a.config.as_ref())?;
    if let Some(m) = a.max_visits {
        cfg.max_visits = m;
    }
    if cfg.max_visits == 0 {
        bail!(UsageError("max_visits must be at least 1".into()));
    }
    let seed = seed.unwrap_or(0);
    let all = records(&a.records)?;
    let vocab = Vocabulary::build(&all, &cfg.buckets, seed)?;
    let (tr, va, te) = split_dataset(&all, seed)?;
    std::fs::create_dir_all(&a.out_dir)?;
    vocab.save(&a.out_dir.join("vocab.json"))?;
    save(&tr, &a.out_dir.join("train.jsonl"))?;
    save(&va, &a.out_dir.join("val.jsonl"))?;
    save(&te, &a.out_dir.join("test.jsonl"))?;
    let manifest = Manifest {
        seed,
        max_visits: cfg.max_visits,
        vocab_hash: vocab.content_hash(),
        vocab_size: vocab.len(),
        n_train: tr.len(),
        n_val: va.len(),
        n_test: te.len(),
    };
    write_json(&manifest, &a.out_dir.join("manifest.json"))?;
    println!("vocabulary {} codes; splits {}/{}/{}", vocab.len(), tr.len(), va.len(), te.len());
    Ok(())
}

fn train_cmd(a: &crate::TrainArgs, seed: Option<u64>) -> Result<()> {
    let manifest: Manifest = read_json(&a.data.join("manifest.json"))?;
    let mut spec = ModelSpec::load(&a.model)?;
    if a.coarse_only {
        spec.mode = Mode::CoarseOnly;
    }
    let mut cfg: TrainConfig = read_or_default(a.config.as_ref())?;
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = a.lr {
        cfg.lr = lr;
    }
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let vocab = vocabulary(&a.data.join("vocab.json"))?;
    if vocab.content_hash() != manifest.vocab_hash {
        bail!(halo_core::HaloError::HashMismatch { expected: manifest.vocab_hash, found: vocab.content_hash() });
    }
    let model_cfg = spec.resolve(vocab.len(), manifest.max_visits)?;
    let tr = encode_all(&records(&a.data.join("train.jsonl"))?, &vocab, manifest.max_visits)?;
    let va = encode_all(&records(&a.data.join("val.jsonl"))?, &vocab, manifest.max_visits)?;
    let log = |e: &halo_core::trainer::EpochLog| {
        eprintln!("epoch {:>3}  train {:.6}  val {:.6}", e.epoch, e.train_loss, e.val_loss);
    };
    let hash = vocab.content_hash();
    let out = match model_cfg.precision {
        Precision::F32 => train::<f32>(&tr, &va, &cfg, model_cfg, &hash, log)?,
        Precision::F64 => train::<f64>(&tr, &va, &cfg, model_cfg, &hash, log)?,
    };
    std::fs::create_dir_all(&a.out_dir)?;
    out.checkpoint.save(&a.out_dir.join("checkpoint.bin"))?;
    write_training_log(&out.log, &a.out_dir.join("training_log.csv"))?;
    println!("best epoch {} val loss {:.6}", out.checkpoint.meta.epoch, out.checkpoint.meta.val_loss);
    Ok(())
}

fn parse_condition(args: &[String]) -> Result<Option<BTreeSet<String>>> {
    if args.is_empty() {
        return Ok(None);
    }
    let mut labels = BTreeSet::new();
    for a in args {
        let Some(value) = a.strip_prefix("label=") else {
            bail!(UsageError(format!("--condition expects label=NAME, got `{a}`")));
        };
        labels.extend(value.split(',').filter(|v| !v.is_empty()).map(String::from));
    }
    Ok(Some(labels))
}

fn generate(a: &crate::GenerateArgs, seed: Option<u64>) -> Result<()> {
    let condition = parse_condition(&a.condition)?;
    if a.n == 0 {
        bail!(UsageError("--n must be at least 1".into()));
    }
    let ck = checkpoint(&a.checkpoint)?;
    if a.coarse_only && ck.meta.model.mode != Mode::CoarseOnly {
        bail!(UsageError("--coarse-only given but the checkpoint has the full model".into()));
    }
    let vocab = vocabulary(&a.vocab)?;
    let recs = generate_dataset(&ck, &vocab, a.n, condition.as_ref(), seed.unwrap_or(0))?;
    save(&recs, &a.out)?;
    println!("wrote {} records to {}", recs.len(), a.out.display());
    Ok(())
}

fn eval_model(a: &crate::EvalModelArgs) -> Result<()> {
    let ck = checkpoint(&a.checkpoint)?;
    let vocab = vocabulary(&a.vocab)?;
    ck.check_vocab(&vocab)?;
    let model = ck.model::<f64>()?;
    let test = encode_all(&records(&a.test)?, &vocab, model.config().max_visits)?;
    let metrics = evaluate_test(&model, &test)?;
    write_json(&metrics, &a.out)?;
    println!("bce {:.6}  f1 {:.4}  pp_per_code {:.4}", metrics.bce_loss, metrics.f1, metrics.pp_per_code);
    Ok(())
}

fn eval_stats(a: &crate::EvalStatsArgs) -> Result<()> {
    let mut cfg: StatsConfig = read_or_default(a.config.as_ref())?;
    if a.top_k.is_some() {
        cfg.top_k = a.top_k;
    }
    let vocab = a.vocab.as_deref().map(vocabulary).transpose()?;
    let report = StatsReport::compute(&records(&a.real)?, &records(&a.synthetic)?, vocab.as_ref(), &cfg)?;
    report.write_to_dir(&a.out_dir)?;
    for (name, r2) in &report.r2 {
        match r2 {
            Some(v) => println!("r2 {name} {v:.4}"),
            None => println!("r2 {name} undefined"),
        }
    }
    Ok(())
}

fn eval_privacy(a: &crate::EvalPrivacyArgs, seed: Option<u64>) -> Result<()> {
    let mut cfg: PrivacyConfig = read_or_default(a.config.as_ref())?;
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(k) = a.k_common {
        cfg.k_common = k;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let vocab = vocabulary(&a.vocab)?;
    let ck = a.checkpoint.as_deref().map(checkpoint).transpose()?;
    if let Some(ck) = &ck {
        ck.check_vocab(&vocab)?;
    }
    let model = ck.as_ref().map(|c| c.model::<f64>()).transpose()?;
    let max_visits = match (a.max_visits, &model) {
        (Some(m), _) => m,
        (None, Some(m)) => m.config().max_visits,
        (None, None) => bail!(UsageError("--max-visits is required without --checkpoint".into())),
    };
    let report = evaluate_privacy(
        model.as_ref(),
        &vocab,
        max_visits,
        &records(&a.train)?,
        &records(&a.heldout)?,
        &records(&a.synthetic)?,
        &cfg,
    )?;
    write_json(&report, &a.out)?;
    if let Some(m) = &report.model_attack {
        println!("model attack accuracy {:.4}", m.accuracy);
    }
    println!("dataset attack accuracy {:.4}", report.dataset_attack.accuracy);
    println!(
        "attribute f1 synthetic {:.4} real {:.4}",
        report.attribute_synthetic.f1, report.attribute_real.f1
    );
    println!("nnaa {:.4}", report.nnaa.nnaa);
    Ok(())
}

fn probe(a: &crate::ProbeArgs, seed: Option<u64>) -> Result<()> {
    let mut cfg: ProbeConfig = read_or_default(a.config.as_ref())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let vocab = a.vocab.as_deref().map(vocabulary).transpose()?;
    let m = utility_probe(&records(&a.train)?, &records(&a.test)?, vocab.as_ref(), &a.label, &cfg)?;
    write_json(&m, &a.out)?;
    println!("accuracy {:.4}  f1 {:.4}", m.accuracy, m.f1);
    Ok(())
}

/// Parameter scale for gradient checks. At the training default of 0.02
/// many gradient entries sit near the roundoff floor of central
/// differences, where relative error stops measuring anything.
const GRADCHECK_INIT_STD: f64 = 0.5;

fn gradcheck(a: &crate::GradcheckArgs, seed: Option<u64>) -> Result<()> {
    let mut spec = ModelSpec::load(&a.model)?;
    spec.init_std = a.init_std.or(spec.init_std).or(Some(GRADCHECK_INIT_STD));
    let cfg = spec.resolve(spec.vocab_size.unwrap_or(7), spec.max_visits.unwrap_or(3))?;
    let report = model_gradient_check(&cfg, seed.unwrap_or(0), a.h)?;
    if let Some(out) = &a.out {
        write_json(&report, out)?;
    }
    println!("max_rel_err {:.3e} ({} parameters)", report.max_rel_error, report.checked);
    if !(report.max_rel_error < a.tolerance) {
        bail!(NumericalFailure(format!(
            "gradient check failed: {:.3e} at parameter {} exceeds {:.0e}",
            report.max_rel_error, report.worst_index, a.tolerance
        )));
    }
    Ok(())
}
