//! Parametric toy record process with exact oracles.

mod exact;
mod params;
mod sample;

pub use exact::{enumerate_matrices, exact_statistics, MAX_ENUMERATED_CELLS, MAX_EXACT_CODES, MAX_EXACT_VISITS};
pub use params::{PairCoupling, ToyGap, ToyLab, ToyParams};
pub use sample::{sample_toy_dataset, sample_toy_record};

#[cfg(test)]
mod tests;
