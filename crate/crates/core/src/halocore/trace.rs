//! Visit-level forward and backward passes.

use super::model::HaloModel;
use crate::error::{HaloError, Result};
use crate::numerics::kernels::{
    col_sum_acc, dot, gemm_acc, gemm_nt_acc, gemm_tn_acc, layer_norm_row_backward, normalize_row, softmax_in_place,
    softmax_row_backward,
};
use crate::scalar::Scalar;

/// Saved activations of one decoder block.
#[derive(Debug, Clone, Default)]
pub struct BlockTrace<T> {
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// Attention weights; row `t` holds `heads × (t+1)` entries.
    probs: Vec<T>,
    ctx: Vec<T>,
    ln1_xhat: Vec<T>,
    ln1_inv: Vec<T>,
    h2: Vec<T>,
    ff_pre: Vec<T>,
    ff_act: Vec<T>,
    ln2_xhat: Vec<T>,
    ln2_inv: Vec<T>,
    out: Vec<T>,
}

impl<T> BlockTrace<T> {
    pub fn output(&self) -> &[T] {
        &self.out
    }
}

fn probs_offset(t: usize, heads: usize) -> usize {
    heads * t * (t + 1) / 2
}

/// Runs block `b` over input rows `r0..r1`; `x` holds exactly those rows.
pub(crate) fn block_extend<T: Scalar>(model: &HaloModel<T>, b: usize, x: &[T], bt: &mut BlockTrace<T>, r0: usize, r1: usize) {
    let c = model.config();
    let (e, f) = (c.n_emb, c.ff_width());
    let (heads, dk) = (c.n_heads, c.head_dim());
    let scale = T::one() / T::of(dk as f64).sqrt();
    let p = model.params();
    let o = model.layout().blocks[b];
    let w = |off: usize, len: usize| &p[off..off + len];
    let m = r1 - r0;
    debug_assert_eq!(x.len(), m * e);

    for (buf, off) in [(&mut bt.q, o.wq), (&mut bt.k, o.wk), (&mut bt.v, o.wv)] {
        buf.resize(r1 * e, T::zero());
        gemm_acc(x, w(off, e * e), &mut buf[r0 * e..], m, e, e);
    }
    bt.ctx.resize(r1 * e, T::zero());
    bt.probs.resize(probs_offset(r1, heads), T::zero());
    for t in r0..r1 {
        for hd in 0..heads {
            let hs = hd * dk..(hd + 1) * dk;
            let base = probs_offset(t, heads) + hd * (t + 1);
            let q = &bt.q[t * e + hs.start..t * e + hs.end];
            let scores = &mut bt.probs[base..base + t + 1];
            for (j, s) in scores.iter_mut().enumerate() {
                *s = dot(q, &bt.k[j * e + hs.start..j * e + hs.end]) * scale;
            }
            softmax_in_place(scores);
            let ctx = &mut bt.ctx[t * e + hs.start..t * e + hs.end];
            for (j, &pj) in bt.probs[base..base + t + 1].iter().enumerate() {
                for (cv, &vv) in ctx.iter_mut().zip(&bt.v[j * e + hs.start..j * e + hs.end]) {
                    *cv += pj * vv;
                }
            }
        }
    }
    let mut h1 = x.to_vec();
    gemm_acc(&bt.ctx[r0 * e..], w(o.wo, e * e), &mut h1, m, e, e);
    bt.ln1_xhat.resize(r1 * e, T::zero());
    bt.h2.resize(r1 * e, T::zero());
    for i in 0..m {
        let t = r0 + i;
        bt.ln1_inv.push(normalize_row(&h1[i * e..(i + 1) * e], &mut bt.ln1_xhat[t * e..(t + 1) * e]));
        for j in 0..e {
            bt.h2[t * e + j] = p[o.ln1_g + j] * bt.ln1_xhat[t * e + j] + p[o.ln1_b + j];
        }
    }
    bt.ff_pre.resize(r1 * f, T::zero());
    for row in bt.ff_pre[r0 * f..].chunks_exact_mut(f) {
        row.copy_from_slice(w(o.ff_b, f));
    }
    gemm_acc(&bt.h2[r0 * e..], w(o.ff_w, e * f), &mut bt.ff_pre[r0 * f..], m, e, f);
    bt.ff_act.extend(bt.ff_pre[r0 * f..].iter().map(|&v| v.max(T::zero())));
    let mut h3 = bt.h2[r0 * e..].to_vec();
    for row in h3.chunks_exact_mut(e) {
        for (v, &cb) in row.iter_mut().zip(w(o.ff_c, e)) {
            *v += cb;
        }
    }
    gemm_acc(&bt.ff_act[r0 * f..], w(o.ff_v, f * e), &mut h3, m, f, e);
    bt.ln2_xhat.resize(r1 * e, T::zero());
    bt.out.resize(r1 * e, T::zero());
    for i in 0..m {
        let t = r0 + i;
        bt.ln2_inv.push(normalize_row(&h3[i * e..(i + 1) * e], &mut bt.ln2_xhat[t * e..(t + 1) * e]));
        for j in 0..e {
            bt.out[t * e + j] = p[o.ln2_g + j] * bt.ln2_xhat[t * e + j] + p[o.ln2_b + j];
        }
    }
}

/// Backward through block `b` over `r` rows with input `x`; accumulates
/// parameter gradients and returns the gradient for `x`.
pub(crate) fn block_backward<T: Scalar>(
    model: &HaloModel<T>,
    b: usize,
    x: &[T],
    bt: &BlockTrace<T>,
    r: usize,
    d_out: &[T],
    grad: &mut [T],
) -> Vec<T> {
    let c = model.config();
    let (e, f) = (c.n_emb, c.ff_width());
    let (heads, dk) = (c.n_heads, c.head_dim());
    let scale = T::one() / T::of(dk as f64).sqrt();
    let p = model.params();
    let o = model.layout().blocks[b];

    let mut dh3 = vec![T::zero(); r * e];
    {
        let (dg, db) = split_pair(grad, o.ln2_g, o.ln2_b, e);
        for t in 0..r {
            let s = t * e..(t + 1) * e;
            layer_norm_row_backward(
                &bt.ln2_xhat[s.clone()],
                bt.ln2_inv[t],
                &p[o.ln2_g..o.ln2_g + e],
                &d_out[s.clone()],
                &mut dh3[s],
                dg,
                db,
            );
        }
    }
    col_sum_acc(&dh3, &mut grad[o.ff_c..o.ff_c + e], e);
    gemm_tn_acc(&bt.ff_act, &dh3, &mut grad[o.ff_v..o.ff_v + f * e], r, f, e);
    let mut d_pre = vec![T::zero(); r * f];
    gemm_nt_acc(&dh3, &p[o.ff_v..o.ff_v + f * e], &mut d_pre, r, e, f);
    for (d, &pre) in d_pre.iter_mut().zip(&bt.ff_pre) {
        if pre <= T::zero() {
            *d = T::zero();
        }
    }
    col_sum_acc(&d_pre, &mut grad[o.ff_b..o.ff_b + f], f);
    gemm_tn_acc(&bt.h2, &d_pre, &mut grad[o.ff_w..o.ff_w + e * f], r, e, f);
    let mut dh2 = dh3;
    gemm_nt_acc(&d_pre, &p[o.ff_w..o.ff_w + e * f], &mut dh2, r, f, e);

    let mut dh1 = vec![T::zero(); r * e];
    {
        let (dg, db) = split_pair(grad, o.ln1_g, o.ln1_b, e);
        for t in 0..r {
            let s = t * e..(t + 1) * e;
            layer_norm_row_backward(
                &bt.ln1_xhat[s.clone()],
                bt.ln1_inv[t],
                &p[o.ln1_g..o.ln1_g + e],
                &dh2[s.clone()],
                &mut dh1[s],
                dg,
                db,
            );
        }
    }
    gemm_tn_acc(&bt.ctx, &dh1, &mut grad[o.wo..o.wo + e * e], r, e, e);
    let mut dctx = vec![T::zero(); r * e];
    gemm_nt_acc(&dh1, &p[o.wo..o.wo + e * e], &mut dctx, r, e, e);

    let mut dq = vec![T::zero(); r * e];
    let mut dk_ = vec![T::zero(); r * e];
    let mut dv = vec![T::zero(); r * e];
    let mut dp = Vec::with_capacity(r);
    let mut ds = Vec::with_capacity(r);
    for t in 0..r {
        for hd in 0..heads {
            let hs = hd * dk..(hd + 1) * dk;
            let base = probs_offset(t, heads) + hd * (t + 1);
            let probs = &bt.probs[base..base + t + 1];
            let dc = &dctx[t * e + hs.start..t * e + hs.end];
            dp.clear();
            for (j, &pj) in probs.iter().enumerate() {
                dp.push(dot(dc, &bt.v[j * e + hs.start..j * e + hs.end]));
                for (g, &d) in dv[j * e + hs.start..j * e + hs.end].iter_mut().zip(dc) {
                    *g += pj * d;
                }
            }
            ds.clear();
            ds.resize(t + 1, T::zero());
            softmax_row_backward(probs, &dp, &mut ds);
            for (j, &sj) in ds.iter().enumerate() {
                let sj = sj * scale;
                for l in hs.clone() {
                    dq[t * e + l] += sj * bt.k[j * e + l];
                    dk_[j * e + l] += sj * bt.q[t * e + l];
                }
            }
        }
    }
    let mut dx = dh1;
    for (g, off) in [(&dq, o.wq), (&dk_, o.wk), (&dv, o.wv)] {
        gemm_tn_acc(x, g, &mut grad[off..off + e * e], r, e, e);
        gemm_nt_acc(g, &p[off..off + e * e], &mut dx, r, e, e);
    }
    dx
}

/// Two disjoint `len`-long slices of `buf` starting at `a < b`.
fn split_pair<T>(buf: &mut [T], a: usize, b: usize, len: usize) -> (&mut [T], &mut [T]) {
    debug_assert!(a + len <= b);
    let (lo, hi) = buf.split_at_mut(b);
    (&mut lo[a..a + len], &mut hi[..len])
}

/// Activations of the visit-level stack for the first `rows` rows of a
/// record. Rows can be appended one at a time; every row is computed by
/// the same per-row arithmetic, so results do not depend on how rows are
/// grouped.
#[derive(Debug, Clone)]
pub struct CoarseTrace<T> {
    rows: usize,
    n_emb: usize,
    h0: Vec<T>,
    blocks: Vec<BlockTrace<T>>,
}

impl<T: Scalar> CoarseTrace<T> {
    pub fn new(model: &HaloModel<T>) -> Self {
        CoarseTrace {
            rows: 0,
            n_emb: model.config().n_emb,
            h0: Vec::new(),
            blocks: vec![BlockTrace::default(); model.config().n_blocks],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Embedded input rows, `rows × n_emb`.
    pub fn embedded(&self) -> &[T] {
        &self.h0
    }

    /// Output of the last block, `rows × n_emb`.
    pub fn history(&self) -> &[T] {
        self.blocks.last().expect("at least one block").output()
    }

    pub fn history_row(&self, t: usize) -> &[T] {
        &self.history()[t * self.n_emb..(t + 1) * self.n_emb]
    }

    /// Runs the stack over `new_rows`, appended after the current rows.
    pub fn extend(&mut self, model: &HaloModel<T>, new_rows: &[&[u8]]) -> Result<()> {
        let c = model.config();
        let e = c.n_emb;
        if let Some(row) = new_rows.iter().find(|r| r.len() != c.vocab_size) {
            return Err(HaloError::Shape(format!("row of width {} for vocabulary {}", row.len(), c.vocab_size)));
        }
        let r0 = self.rows;
        let r1 = r0 + new_rows.len();
        if r1 > c.rows_max() {
            return Err(HaloError::Shape(format!("{r1} rows exceed the model's {}", c.rows_max())));
        }
        if r1 == r0 {
            return Ok(());
        }
        let p = model.params();
        let lay = model.layout();
        for (i, row) in new_rows.iter().enumerate() {
            let t = r0 + i;
            self.h0.extend_from_slice(&p[lay.wpe + t * e..lay.wpe + (t + 1) * e]);
            let h = &mut self.h0[t * e..];
            for (code, _) in row.iter().enumerate().filter(|(_, &b)| b != 0) {
                for (x, &w) in h.iter_mut().zip(&p[lay.wte + code * e..lay.wte + (code + 1) * e]) {
                    *x += w;
                }
            }
        }
        for b in 0..self.blocks.len() {
            let (before, rest) = self.blocks.split_at_mut(b);
            let x: &[T] = if b == 0 { &self.h0[r0 * e..] } else { &before[b - 1].out[r0 * e..] };
            block_extend(model, b, x, &mut rest[0], r0, r1);
        }
        self.rows = r1;
        Ok(())
    }

    /// Accumulates parameter gradients into `grad` given `d_history`, the
    /// gradient with respect to [`Self::history`]. `input` holds the rows
    /// this trace was built from.
    pub fn backward(&self, model: &HaloModel<T>, input: &[&[u8]], d_history: Vec<T>, grad: &mut [T]) {
        let e = self.n_emb;
        let lay = model.layout();
        let r = self.rows;
        debug_assert_eq!(d_history.len(), r * e);
        let mut d = d_history;
        for b in (0..self.blocks.len()).rev() {
            let x: &[T] = if b == 0 { &self.h0 } else { &self.blocks[b - 1].out };
            d = block_backward(model, b, x, &self.blocks[b], r, &d, grad);
        }
        for t in 0..r {
            let dt = &d[t * e..(t + 1) * e];
            for (g, &v) in grad[lay.wpe + t * e..lay.wpe + (t + 1) * e].iter_mut().zip(dt) {
                *g += v;
            }
            for (code, _) in input[t].iter().enumerate().filter(|(_, &b)| b != 0) {
                for (g, &v) in grad[lay.wte + code * e..lay.wte + (code + 1) * e].iter_mut().zip(dt) {
                    *g += v;
                }
            }
        }
    }
}
