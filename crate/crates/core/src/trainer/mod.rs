//! Training loop, checkpoints and held-out modeling metrics.

mod checkpoint;
mod config;
mod metrics;
mod train;

pub use checkpoint::{Checkpoint, CheckpointMeta, FORMAT_VERSION, MAGIC};
pub use config::TrainConfig;
pub use metrics::{evaluate_test, perplexity_per_code, perplexity_root_form, TestMetrics};
pub use train::{train, write_training_log, EpochLog, TrainOutcome};
