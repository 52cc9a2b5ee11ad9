use rand::seq::index::sample;
use rayon::prelude::*;

use super::{
    attribute_inference_attack, membership_dataset_attack, membership_model_attack, nnaa_risk, AttributeSplit,
    BitSet, PrivacyConfig, PrivacyReport,
};
use crate::error::{HaloError, Result};
use crate::halocore::HaloModel;
use crate::recordkit::{encode_record, Record, RecordMatrix, Vocabulary};
use crate::rng;
use crate::scalar::Scalar;

fn encode_all(records: &[&Record], vocab: &Vocabulary, max_visits: usize) -> Result<Vec<RecordMatrix>> {
    records.par_iter().map(|r| encode_record(r, vocab, max_visits)).collect()
}

fn subset<'a>(records: &'a [Record], n: usize, seed: u64, stream: u64, what: &str) -> Result<Vec<&'a Record>> {
    if records.len() < n {
        return Err(HaloError::InsufficientData(format!("{what} set has {} records, need {n}", records.len())));
    }
    let mut r = rng::stream(seed, stream);
    Ok(sample(&mut r, records.len(), n).into_iter().map(|i| &records[i]).collect())
}

/// Runs every attack. `train` holds the members, `heldout` real records
/// never trained on; it supplies the non-members, the evaluation set and
/// the real-data attribute baseline. Without a model the model attack is
/// skipped.
pub fn evaluate_privacy<T: Scalar + Send + Sync>(
    model: Option<&HaloModel<T>>,
    vocab: &Vocabulary,
    max_visits: usize,
    train: &[Record],
    heldout: &[Record],
    synthetic: &[Record],
    config: &PrivacyConfig,
) -> Result<PrivacyReport> {
    let n = config.n;
    let members = subset(train, n, config.seed, 10, "training")?;
    let non_members = subset(heldout, n, config.seed, 11, "held-out")?;
    let (mm, nm) = (encode_all(&members, vocab, max_visits)?, encode_all(&non_members, vocab, max_visits)?);
    let model_attack = model.map(|m| membership_model_attack(m, &mm, &nm)).transpose()?;

    let synth_refs: Vec<&Record> = synthetic.iter().collect();
    let bits = |ms: &[RecordMatrix]| -> Vec<BitSet> { ms.iter().map(BitSet::from_matrix).collect() };
    let sm = bits(&encode_all(&synth_refs, vocab, max_visits)?);
    let (mb, nb) = (bits(&mm), bits(&nm));
    let dataset_attack = membership_dataset_attack(&sm, &mb, &nb)?;

    let split = AttributeSplit::new(vocab, train, config.k_common)?;
    let queries: Vec<Record> = members.iter().map(|&r| r.clone()).collect();
    let attribute_synthetic = attribute_inference_attack(&split, synthetic, &queries)?;
    let real_source: Vec<Record> = non_members.iter().map(|&r| r.clone()).collect();
    let attribute_real = attribute_inference_attack(&split, &real_source, &queries)?;

    let all = |rs: &[Record]| -> Result<Vec<BitSet>> {
        let refs: Vec<&Record> = rs.iter().collect();
        Ok(bits(&encode_all(&refs, vocab, max_visits)?))
    };
    let nnaa = nnaa_risk(&all(train)?, &sm, &all(heldout)?, n, config.seed)?;
    Ok(PrivacyReport { config: *config, model_attack, dataset_attack, attribute_synthetic, attribute_real, nnaa })
}
