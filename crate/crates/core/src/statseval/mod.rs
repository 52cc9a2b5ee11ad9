//! Statistical similarity between real and synthetic datasets.

mod probe;
mod report;
mod summary;
mod tables;

pub use probe::{utility_probe, ProbeConfig, ProbeMetrics};
pub use report::{DatasetStats, StatsConfig, StatsReport};
pub use summary::{
    aggregate_stats, aligned, continuous_summaries, default_gap_edges, label_probabilities, r_squared,
    table_r_squared, AggregateStats, ContinuousSummary, GapHistogram, MeanStd, VariableSummary,
};
pub use tables::{
    code_counts, code_probabilities, same_visit_key, sequential_key, table_name, CodedDataset, Normalization,
    ProbTable, StatKind, TableCounts, TableSet,
};
