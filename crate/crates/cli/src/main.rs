//! `halo`: prepare records, train, generate and evaluate.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use halo_core::HaloError;

#[derive(Debug, Parser)]
#[command(name = "halo", version, about = "Synthetic longitudinal record generation")]
pub struct Cli {
    /// Seed for every random choice; overrides seeds in config files.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a toy cohort.
    ToyGen(ToyGenArgs),
    /// Build the vocabulary and split records into train/val/test.
    Prepare(PrepareArgs),
    /// Train a model on a prepared directory.
    Train(TrainArgs),
    /// Generate synthetic records from a checkpoint.
    Generate(GenerateArgs),
    /// Test-set loss, F1 and perplexity.
    EvalModel(EvalModelArgs),
    /// Compare code statistics of two datasets.
    EvalStats(EvalStatsArgs),
    /// Membership, attribute and nearest-neighbor privacy attacks.
    EvalPrivacy(EvalPrivacyArgs),
    /// Train a label classifier on one dataset and test it on another.
    ProbeUtility(ProbeArgs),
    /// Check backpropagated gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct ToyGenArgs {
    /// Toy cohort parameters (JSON).
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Records (JSONL).
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub max_visits: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by `prepare`.
    #[arg(long)]
    pub data: PathBuf,
    /// `desk`, `tiny`, or a model spec (JSON).
    #[arg(long, default_value = "desk")]
    pub model: String,
    /// Training config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Train the coarse-only variant regardless of the spec.
    #[arg(long)]
    pub coarse_only: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub n: usize,
    /// Fix the label visit, e.g. `label=diabetes`; repeat for several labels.
    /// `label=` alone conditions on no labels.
    #[arg(long)]
    pub condition: Vec<String>,
    /// Require a coarse-only checkpoint.
    #[arg(long)]
    pub coarse_only: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalModelArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Held-out records (JSONL).
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalStatsArgs {
    /// Real records (JSONL).
    pub real: PathBuf,
    /// Synthetic records (JSONL).
    pub synthetic: PathBuf,
    /// Vocabulary; adds lab and gap buckets to the code tables.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalPrivacyArgs {
    /// Training records (the members).
    #[arg(long)]
    pub train: PathBuf,
    /// Real records never trained on.
    #[arg(long)]
    pub heldout: PathBuf,
    #[arg(long)]
    pub synthetic: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Enables the model attack.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Defaults to the checkpoint's.
    #[arg(long)]
    pub max_visits: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k_common: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// Records to train on, usually synthetic.
    #[arg(long)]
    pub train: PathBuf,
    /// Real records to test on.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub label: String,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// `tiny`, `desk`, or a model spec (JSON). Missing sizes default to
    /// 7 codes and 3 visits.
    #[arg(long, default_value = "tiny")]
    pub model: String,
    #[arg(long, default_value_t = 1e-5)]
    pub h: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Parameter scale; overrides the spec's (default 0.5).
    #[arg(long)]
    pub init_std: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A malformed invocation that clap cannot detect.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Gradient check above tolerance.
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl std::fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if cause.is::<NumericalFailure>() {
            return EXIT_NUMERICAL;
        }
        if let Some(h) = cause.downcast_ref::<HaloError>() {
            return if h.is_numerical() { EXIT_NUMERICAL } else { EXIT_DATA };
        }
    }
    EXIT_DATA
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
