//! The hierarchical autoregressive model.

mod check;
mod config;
mod layout;
mod model;
mod trace;

pub use check::{model_gradient_check, random_batch};
pub use config::{Mode, ModelConfig, Precision};
pub use layout::{fine_mask, BlockOffsets, Layout, ParamEntry, ParamRole};
pub use model::{FineWeights, HaloModel};
pub use trace::CoarseTrace;

pub type HaloModel32 = HaloModel<f32>;
pub type HaloModel64 = HaloModel<f64>;
