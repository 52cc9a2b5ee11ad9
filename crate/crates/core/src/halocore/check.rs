use super::{HaloModel, ModelConfig};
use crate::error::Result;
use crate::numerics::{finite_diff_grad_check, GradCheckReport};
use crate::recordkit::RecordMatrix;
use crate::rng;

/// `n` random matrices of varying height, padded to the model's frame.
/// Bits are i.i.d. with probability `density`; no record structure.
pub fn random_batch(config: &ModelConfig, n: usize, density: f64, seed: u64) -> Vec<RecordMatrix> {
    let mut r = rng::seeded(seed);
    let rows_max = config.rows_max();
    (0..n)
        .map(|k| {
            let rows = (3 + k % 4).min(rows_max);
            let mut m = RecordMatrix::zeros(rows_max, config.vocab_size, rows);
            for t in 0..rows {
                for c in 0..config.vocab_size {
                    m.set(t, c, rng::bernoulli(&mut r, density));
                }
            }
            m
        })
        .collect()
}

/// Backpropagated gradient of the mean loss against central differences
/// at step `h`, on an f64 model initialized from `seed` and a random batch
/// drawn from `seed + 100`.
pub fn model_gradient_check(config: &ModelConfig, seed: u64, h: f64) -> Result<GradCheckReport> {
    let mut model = HaloModel::<f64>::new(config.clone(), seed)?;
    let batch = random_batch(config, 5, 0.35, seed + 100);
    let (_, grad) = model.loss_and_grad(&batch)?;
    let point = model.params().to_vec();
    finite_diff_grad_check(
        |x| {
            model.params_mut().copy_from_slice(x);
            model.training_loss(&batch).unwrap_or(f64::NAN)
        },
        &point,
        &grad,
        h,
    )
}
