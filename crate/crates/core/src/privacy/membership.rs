use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distance::{check_columns, nearest, BitSet};
use crate::error::{HaloError, Result};
use crate::halocore::HaloModel;
use crate::recordkit::RecordMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    /// Members (and non-members) attacked.
    pub n: usize,
}

/// Predicts "member" for the `n` highest scores of `2n` candidates.
///
/// Candidates are ranked with members and non-members interleaved
/// (member `i` at `2i`, non-member `i` at `2i + 1`) and ties go to the
/// lower rank, so uniform scores split the positives evenly.
pub fn attack_from_scores(members: &[f64], non_members: &[f64]) -> Result<AttackReport> {
    let n = members.len();
    if n == 0 || non_members.len() != n {
        return Err(HaloError::Shape(format!("{n} members against {} non-members", non_members.len())));
    }
    if members.iter().chain(non_members).any(|s| s.is_nan()) {
        return Err(HaloError::NonFinite("attack score".into()));
    }
    let score = |i: usize| if i % 2 == 0 { members[i / 2] } else { non_members[i / 2] };
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
    let tp = order[..n].iter().filter(|&&i| i % 2 == 0).count();
    let fp = n - tp;
    let tn = n - fp;
    Ok(AttackReport {
        accuracy: (tp + tn) as f64 / (2 * n) as f64,
        precision: tp as f64 / n as f64,
        recall: tp as f64 / n as f64,
        n,
    })
}

/// Scores each record by its log-probability under the model.
pub fn membership_model_attack<T: Scalar + Send + Sync>(
    model: &HaloModel<T>,
    members: &[RecordMatrix],
    non_members: &[RecordMatrix],
) -> Result<AttackReport> {
    let score = |set: &[RecordMatrix]| -> Result<Vec<f64>> {
        set.par_iter().map(|m| model.record_log_prob(m).map(Scalar::as_f64)).collect()
    };
    attack_from_scores(&score(members)?, &score(non_members)?)
}

/// Scores each record by minus its distance to the closest synthetic record.
pub fn membership_dataset_attack(synthetic: &[BitSet], members: &[BitSet], non_members: &[BitSet]) -> Result<AttackReport> {
    if synthetic.is_empty() {
        return Err(HaloError::InsufficientData("empty synthetic set".into()));
    }
    check_columns(&[synthetic, members, non_members])?;
    let score = |set: &[BitSet]| -> Vec<f64> {
        set.par_iter().map(|q| -(nearest(q, synthetic, None).expect("non-empty pool").0 as f64)).collect()
    };
    attack_from_scores(&score(members), &score(non_members))
}
