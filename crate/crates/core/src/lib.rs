pub mod error;
pub mod halocore;
pub mod numerics;
pub mod privacy;
pub mod recordkit;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod statseval;
pub mod toycohort;
pub mod trainer;

pub use error::{HaloError, Result};
pub use scalar::Scalar;

pub use halocore::{HaloModel32, HaloModel64};
