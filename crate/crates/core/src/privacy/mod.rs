//! Membership inference, attribute inference and nearest-neighbor
//! adversarial accuracy.

mod attribute;
mod distance;
mod membership;
mod nnaa;
mod report;

use serde::{Deserialize, Serialize};

pub use attribute::{attribute_inference_attack, AttributeReport, AttributeSplit};
pub use distance::{hamming_distance, nearest, BitSet};
pub use membership::{attack_from_scores, membership_dataset_attack, membership_model_attack, AttackReport};
pub use nnaa::{nnaa_risk, NnaaReport};
pub use report::evaluate_privacy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrivacyConfig {
    /// Records per side in every attack.
    pub n: usize,
    /// Medical codes treated as known in attribute inference.
    pub k_common: usize,
    pub seed: u64,
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        PrivacyConfig { n: 1000, k_common: 10, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub config: PrivacyConfig,
    pub model_attack: Option<AttackReport>,
    pub dataset_attack: AttackReport,
    pub attribute_synthetic: AttributeReport,
    /// The same attack with held-out real records as the source.
    pub attribute_real: AttributeReport,
    pub nnaa: NnaaReport,
}
