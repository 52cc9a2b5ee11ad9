//! Dense kernels with hand-written backward passes.
//!
//! Every kernel computes each output row independently and in a fixed
//! summation order, so evaluating one row alone is bit-identical to
//! evaluating it inside a larger batch.

use super::tensor::Tensor;
use crate::error::{HaloError, Result};
use crate::scalar::Scalar;

/// Layer-norm variance regularizer.
pub const LN_EPS: f64 = 1e-5;

/// `c[m×n] += a[m×k] · b[k×n]`
pub fn gemm_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for (a_row, c_row) in a.chunks_exact(k).zip(c.chunks_exact_mut(n)) {
        for (&x, b_row) in a_row.iter().zip(b.chunks_exact(n)) {
            for (cj, &bj) in c_row.iter_mut().zip(b_row) {
                *cj += x * bj;
            }
        }
    }
}

/// `out[k×n] += aᵀ · g` with `a: m×k`, `g: m×n`.
pub fn gemm_tn_acc<T: Scalar>(a: &[T], g: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(g.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    for (a_row, g_row) in a.chunks_exact(k).zip(g.chunks_exact(n)) {
        for (&x, o_row) in a_row.iter().zip(out.chunks_exact_mut(n)) {
            if x == T::zero() {
                continue;
            }
            for (o, &gj) in o_row.iter_mut().zip(g_row) {
                *o += x * gj;
            }
        }
    }
}

/// `out[m×k] += g · bᵀ` with `g: m×n`, `b: k×n`.
pub fn gemm_nt_acc<T: Scalar>(g: &[T], b: &[T], out: &mut [T], m: usize, n: usize, k: usize) {
    debug_assert_eq!(g.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * k);
    for (g_row, o_row) in g.chunks_exact(n).zip(out.chunks_exact_mut(k)) {
        for (o, b_row) in o_row.iter_mut().zip(b.chunks_exact(n)) {
            *o += dot(g_row, b_row);
        }
    }
}

/// Dot product with eight independent partial sums.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (&x, &y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// Column sums of an `m×n` block added into `out`.
pub fn col_sum_acc<T: Scalar>(g: &[T], out: &mut [T], n: usize) {
    for row in g.chunks_exact(n) {
        for (o, &x) in out.iter_mut().zip(row) {
            *o += x;
        }
    }
}

/// `y = x·W + b` for `x: m×k`, `W: k×n`.
pub fn linear<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&[T]>) -> Result<Tensor<T>> {
    let (m, k, n) = (x.rows(), x.cols(), w.cols());
    if w.rows() != k || b.is_some_and(|b| b.len() != n) {
        return Err(HaloError::Shape(format!(
            "linear: x {:?}, W {:?}, b {:?}",
            x.shape(),
            w.shape(),
            b.map(|b| b.len())
        )));
    }
    let mut y = Tensor::zeros(m, n);
    if let Some(b) = b {
        for row in y.data_mut().chunks_exact_mut(n) {
            row.copy_from_slice(b);
        }
    }
    gemm_acc(x.data(), w.data(), y.data_mut(), m, k, n);
    Ok(y)
}

/// Gradients of [`linear`]: `(∂x, ∂W, ∂b)` given upstream `dy`.
pub fn linear_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Vec<T>)> {
    let (m, k, n) = (x.rows(), x.cols(), w.cols());
    if w.rows() != k || dy.shape() != [m, n] {
        return Err(HaloError::Shape("linear_backward".into()));
    }
    let mut dx = Tensor::zeros(m, k);
    let mut dw = Tensor::zeros(k, n);
    let mut db = vec![T::zero(); n];
    gemm_nt_acc(dy.data(), w.data(), dx.data_mut(), m, n, k);
    gemm_tn_acc(x.data(), dy.data(), dw.data_mut(), m, k, n);
    col_sum_acc(dy.data(), &mut db, n);
    Ok((dx, dw, db))
}

/// Normalizes one row in place into `(x - mean) / sqrt(var + eps)`; returns `1/sqrt(var + eps)`.
#[inline]
pub fn normalize_row<T: Scalar>(x: &[T], xhat: &mut [T]) -> T {
    let n = T::of(x.len() as f64);
    let mean = x.iter().copied().sum::<T>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    let inv = T::one() / (var + T::of(LN_EPS)).sqrt();
    for (h, &v) in xhat.iter_mut().zip(x) {
        *h = (v - mean) * inv;
    }
    inv
}

/// Backward of `y = γ·x̂ + β` through the normalization for one row.
#[inline]
pub fn layer_norm_row_backward<T: Scalar>(
    xhat: &[T],
    inv_std: T,
    gamma: &[T],
    dy: &[T],
    dx: &mut [T],
    dgamma: &mut [T],
    dbeta: &mut [T],
) {
    let n = T::of(xhat.len() as f64);
    let mut sum_d = T::zero();
    let mut sum_dx = T::zero();
    for j in 0..xhat.len() {
        let d = dy[j] * gamma[j];
        dgamma[j] += dy[j] * xhat[j];
        dbeta[j] += dy[j];
        sum_d += d;
        sum_dx += d * xhat[j];
    }
    for j in 0..xhat.len() {
        let d = dy[j] * gamma[j];
        dx[j] += inv_std / n * (n * d - sum_d - xhat[j] * sum_dx);
    }
}

/// Cached quantities for [`layer_norm_backward`].
#[derive(Debug, Clone)]
pub struct LayerNormCache<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
}

/// Layer normalization over the last dimension.
pub fn layer_norm<T: Scalar>(x: &Tensor<T>, gamma: &[T], beta: &[T]) -> Result<(Tensor<T>, LayerNormCache<T>)> {
    let n = x.cols();
    if gamma.len() != n || beta.len() != n {
        return Err(HaloError::Shape("layer_norm: γ/β width".into()));
    }
    let mut xhat = Tensor::zeros(x.rows(), n);
    let mut inv_std = Vec::with_capacity(x.rows());
    let mut y = Tensor::zeros(x.rows(), n);
    for i in 0..x.rows() {
        inv_std.push(normalize_row(x.row(i), xhat.row_mut(i)));
        for j in 0..n {
            y.set(i, j, gamma[j] * xhat.get(i, j) + beta[j]);
        }
    }
    Ok((y, LayerNormCache { xhat, inv_std }))
}

pub fn layer_norm_backward<T: Scalar>(
    cache: &LayerNormCache<T>,
    gamma: &[T],
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    let n = cache.xhat.cols();
    if dy.shape() != cache.xhat.shape() || gamma.len() != n {
        return Err(HaloError::Shape("layer_norm_backward".into()));
    }
    let mut dx = Tensor::zeros(dy.rows(), n);
    let mut dgamma = vec![T::zero(); n];
    let mut dbeta = vec![T::zero(); n];
    for i in 0..dy.rows() {
        layer_norm_row_backward(
            cache.xhat.row(i),
            cache.inv_std[i],
            gamma,
            dy.row(i),
            dx.row_mut(i),
            &mut dgamma,
            &mut dbeta,
        );
    }
    Ok((dx, dgamma, dbeta))
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

/// Passes `dy` where the pre-activation was positive.
pub fn relu_backward<T: Scalar>(pre: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let data = pre.data().iter().zip(dy.data()).map(|(&p, &d)| if p > T::zero() { d } else { T::zero() }).collect();
    Tensor::from_vec(pre.rows(), pre.cols(), data).expect("same shape")
}

/// In-place softmax over `scores`, max-subtracted.
#[inline]
pub fn softmax_in_place<T: Scalar>(scores: &mut [T]) {
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
}

/// Row-wise softmax of `scores` with `allowed(i, j) == false` positions
/// treated as −∞ (exactly zero probability).
pub fn masked_softmax<T: Scalar>(scores: &Tensor<T>, allowed: impl Fn(usize, usize) -> bool) -> Result<Tensor<T>> {
    let mut out = Tensor::zeros(scores.rows(), scores.cols());
    let mut buf = Vec::with_capacity(scores.cols());
    for i in 0..scores.rows() {
        buf.clear();
        let idx: Vec<usize> = (0..scores.cols()).filter(|&j| allowed(i, j)).collect();
        if idx.is_empty() {
            return Err(HaloError::Shape(format!("masked_softmax: row {i} has no allowed position")));
        }
        buf.extend(idx.iter().map(|&j| scores.get(i, j)));
        softmax_in_place(&mut buf);
        for (&j, &p) in idx.iter().zip(&buf) {
            out.set(i, j, p);
        }
    }
    Ok(out)
}

/// Causal mask: position `j` visible from row `i` iff `j <= i`.
pub fn causal(i: usize, j: usize) -> bool {
    j <= i
}

/// Backward of softmax for one row: `ds = p ⊙ (dp − ⟨p, dp⟩)`.
#[inline]
pub fn softmax_row_backward<T: Scalar>(p: &[T], dp: &[T], ds: &mut [T]) {
    let inner: T = p.iter().zip(dp).map(|(&a, &b)| a * b).sum();
    for ((d, &pi), &dpi) in ds.iter_mut().zip(p).zip(dp) {
        *d = pi * (dpi - inner);
    }
}
