use crate::error::{HaloError, Result};
use crate::scalar::{sigmoid, Scalar};

/// `max(z,0) − z·y + log(1 + e^{−|z|})`
#[inline]
pub fn bce_term<T: Scalar>(z: T, y: T) -> T {
    z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p()
}

/// Sum of masked binary cross-entropy terms, the unscaled gradient
/// `mask·(σ(z) − y)`, and `Σ mask`.
pub fn bce_with_logits_sum<T: Scalar>(logits: &[T], targets: &[T], mask: &[T]) -> Result<(T, Vec<T>, T)> {
    if logits.len() != targets.len() || logits.len() != mask.len() {
        return Err(HaloError::Shape("bce: logits, targets and mask differ in length".into()));
    }
    let mut sum = T::zero();
    let mut count = T::zero();
    let mut grad = vec![T::zero(); logits.len()];
    for i in 0..logits.len() {
        let m = mask[i];
        if m == T::zero() {
            continue;
        }
        sum += m * bce_term(logits[i], targets[i]);
        grad[i] = m * (sigmoid(logits[i]) - targets[i]);
        count += m;
    }
    Ok((sum, grad, count))
}

/// Mean masked binary cross-entropy with logits, and its gradient.
pub fn stable_bce_with_logits<T: Scalar>(logits: &[T], targets: &[T], mask: &[T]) -> Result<(T, Vec<T>)> {
    let (sum, mut grad, count) = bce_with_logits_sum(logits, targets, mask)?;
    if count <= T::zero() {
        return Err(HaloError::EmptyMask);
    }
    for g in &mut grad {
        *g /= count;
    }
    let mean = sum / count;
    if !mean.is_finite() {
        return Err(HaloError::NonFinite("bce loss".into()));
    }
    Ok((mean, grad))
}
