use std::borrow::Borrow;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::config::{Mode, ModelConfig, Precision};
use super::layout::{fine_mask, Layout, ParamRole};
use super::trace::{block_backward, block_extend, BlockTrace, CoarseTrace};
use crate::error::{HaloError, Result};
use crate::numerics::kernels::{col_sum_acc, gemm_acc, gemm_nt_acc, gemm_tn_acc};
use crate::numerics::loss::bce_term;
use crate::numerics::Tensor;
use crate::recordkit::RecordMatrix;
use crate::rng;
use crate::scalar::{sigmoid, Scalar};

/// Records per gradient chunk. Fixed so the summation order, and hence
/// the result, does not depend on the number of threads.
const GRAD_CHUNK: usize = 4;

/// The hierarchical model: a causal transformer over visits followed by
/// masked linear layers over the codes of the next visit.
#[derive(Debug, Clone)]
pub struct HaloModel<T> {
    config: ModelConfig,
    layout: Layout,
    params: Vec<T>,
    masks: Vec<Vec<bool>>,
}

/// Effective code-level weights `W ⊙ M`. The final layer keeps only its
/// code columns, as a `width × |C|` block.
#[derive(Debug, Clone)]
pub struct FineWeights<T> {
    hidden: Vec<Vec<T>>,
    last: Vec<T>,
    last_bias: Vec<T>,
}

/// Per-record activations of the code-level layers.
struct FineCache<T> {
    /// Inputs of each layer, `rows × width`.
    inputs: Vec<Vec<T>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Vec<T>>,
    logits: Vec<T>,
}

impl<T: Scalar> HaloModel<T> {
    /// A freshly initialized model: weights `N(0, init_std²)`, biases and
    /// layer-norm shifts 0, layer-norm gains 1.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut rng = rng::seeded(seed);
        let normal = Normal::new(0.0, config.init_std).map_err(|e| HaloError::Config(e.to_string()))?;
        let mut params = vec![T::zero(); layout.total];
        for entry in &layout.entries {
            let slot = &mut params[entry.range()];
            match entry.role {
                ParamRole::Weight => slot.iter_mut().for_each(|p| *p = T::of(normal.sample(&mut rng))),
                ParamRole::Gain => slot.fill(T::one()),
                ParamRole::Bias | ParamRole::Shift => {}
            }
        }
        Self::from_params(config, params)
    }

    /// Wraps an existing parameter vector; masked code-level weights are
    /// zeroed.
    pub fn from_params(mut config: ModelConfig, params: Vec<T>) -> Result<Self> {
        config.validate()?;
        config.precision = if T::NAME == "f64" { Precision::F64 } else { Precision::F32 };
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(HaloError::Shape(format!("{} parameters, layout needs {}", params.len(), layout.total)));
        }
        let d = config.fine_width();
        let masks = (0..layout.fine.len()).map(|n| fine_mask(config.n_emb, d, n, layout.fine.len())).collect();
        let mut model = HaloModel { config, layout, params, masks };
        model.enforce_masks();
        Ok(model)
    }

    pub fn cast<U: Scalar>(&self) -> HaloModel<U> {
        let params = self.params.iter().map(|&p| U::of(p.as_f64())).collect();
        HaloModel::from_params(self.config.clone(), params).expect("same layout")
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    /// Mutable parameters. Masked weights are ignored by every forward
    /// pass, whatever they hold.
    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn fine_masks(&self) -> &[Vec<bool>] {
        &self.masks
    }

    /// Zeroes every masked code-level weight.
    pub fn enforce_masks(&mut self) {
        let d = self.config.fine_width();
        for (n, &(w, _)) in self.layout.fine.iter().enumerate() {
            for (p, &keep) in self.params[w..w + d * d].iter_mut().zip(&self.masks[n]) {
                if !keep {
                    *p = T::zero();
                }
            }
        }
    }

    pub fn fine_weights(&self) -> FineWeights<T> {
        let d = self.config.fine_width();
        let (e, nc) = (self.config.n_emb, self.config.vocab_size);
        let n_layers = self.layout.fine.len();
        let effective = |n: usize| -> Vec<T> {
            let w = self.layout.fine[n].0;
            self.params[w..w + d * d]
                .iter()
                .zip(&self.masks[n])
                .map(|(&p, &keep)| if keep { p } else { T::zero() })
                .collect()
        };
        if n_layers == 0 {
            return FineWeights { hidden: vec![], last: vec![], last_bias: vec![] };
        }
        let hidden = (0..n_layers - 1).map(effective).collect();
        let full_last = effective(n_layers - 1);
        let mut last = Vec::with_capacity(d * nc);
        for row in full_last.chunks_exact(d) {
            last.extend_from_slice(&row[e..]);
        }
        let b = self.layout.fine[n_layers - 1].1;
        FineWeights { hidden, last, last_bias: self.params[b + e..b + d].to_vec() }
    }

    fn check_matrix(&self, m: &RecordMatrix) -> Result<()> {
        if m.cols() != self.config.vocab_size {
            return Err(HaloError::Shape(format!("{} columns for vocabulary {}", m.cols(), self.config.vocab_size)));
        }
        if m.rows() > self.config.rows_max() {
            return Err(HaloError::Shape(format!("{} rows exceed the model's {}", m.rows(), self.config.rows_max())));
        }
        Ok(())
    }

    /// `H⁰ = R·Wₑ + Wₚ`
    pub fn embed_input(&self, m: &RecordMatrix) -> Result<Tensor<T>> {
        self.check_matrix(m)?;
        let e = self.config.n_emb;
        let (wte, wpe) = (self.layout.wte, self.layout.wpe);
        Ok(Tensor::from_fn(m.rows(), e, |t, j| {
            let mut h = self.params[wpe + t * e + j];
            for (code, _) in m.row(t).iter().enumerate().filter(|(_, &b)| b != 0) {
                h += self.params[wte + code * e + j];
            }
            h
        }))
    }

    /// One post-norm decoder block applied to `h` (`rows × n_emb`).
    pub fn decoder_block_forward(&self, block: usize, h: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_block_input(block, h)?;
        let mut bt = BlockTrace::default();
        block_extend(self, block, h.data(), &mut bt, 0, h.rows());
        Tensor::from_vec(h.rows(), h.cols(), bt.output().to_vec())
    }

    /// Vector-Jacobian product of one block: returns `(∂h, ∂params)` for
    /// upstream gradient `d_out`.
    pub fn decoder_block_backward(&self, block: usize, h: &Tensor<T>, d_out: &Tensor<T>) -> Result<(Tensor<T>, Vec<T>)> {
        self.check_block_input(block, h)?;
        if d_out.shape() != h.shape() {
            return Err(HaloError::Shape("block gradient shape".into()));
        }
        let mut bt = BlockTrace::default();
        block_extend(self, block, h.data(), &mut bt, 0, h.rows());
        let mut grad = vec![T::zero(); self.params.len()];
        let dx = block_backward(self, block, h.data(), &bt, h.rows(), d_out.data(), &mut grad);
        Ok((Tensor::from_vec(h.rows(), h.cols(), dx)?, grad))
    }

    fn check_block_input(&self, block: usize, h: &Tensor<T>) -> Result<()> {
        if block >= self.config.n_blocks || h.cols() != self.config.n_emb || h.rows() == 0 {
            return Err(HaloError::Shape(format!("block {block} input {:?}", h.shape())));
        }
        Ok(())
    }

    pub fn coarse_trace(&self, rows: &[&[u8]]) -> Result<CoarseTrace<T>> {
        let mut trace = CoarseTrace::new(self);
        trace.extend(self, rows)?;
        Ok(trace)
    }

    /// History embeddings `H^(M)` for every row of `m`.
    pub fn visit_module_forward(&self, m: &RecordMatrix) -> Result<Tensor<T>> {
        self.check_matrix(m)?;
        let rows: Vec<&[u8]> = (0..m.rows()).map(|t| m.row(t)).collect();
        let trace = self.coarse_trace(&rows)?;
        Tensor::from_vec(m.rows(), self.config.n_emb, trace.history().to_vec())
    }

    /// Rows `concat(H[t], R[t+1])` for `t = 0..rows−1`.
    pub fn offset_and_concat(&self, history: &Tensor<T>, m: &RecordMatrix) -> Result<Tensor<T>> {
        if m.rows() < 2 || history.rows() < m.rows() - 1 || history.cols() != self.config.n_emb {
            return Err(HaloError::Shape("offset_and_concat needs at least two rows".into()));
        }
        let e = self.config.n_emb;
        Ok(Tensor::from_fn(m.rows() - 1, self.config.fine_width(), |t, j| {
            if j < e {
                history.get(t, j)
            } else if m.get(t + 1, j - e) {
                T::one()
            } else {
                T::zero()
            }
        }))
    }

    /// Masked layer `layer` (0-based) over full-width inputs. Hidden layers
    /// apply ReLU; the final layer returns raw logits for every unit.
    pub fn masked_linear_forward(&self, x: &Tensor<T>, layer: usize) -> Result<Tensor<T>> {
        let d = self.config.fine_width();
        if layer >= self.layout.fine.len() || x.cols() != d {
            return Err(HaloError::Shape(format!("masked layer {layer} input {:?}", x.shape())));
        }
        let (w, b) = self.layout.fine[layer];
        let weff: Vec<T> = self.params[w..w + d * d]
            .iter()
            .zip(&self.masks[layer])
            .map(|(&p, &keep)| if keep { p } else { T::zero() })
            .collect();
        let mut y = Tensor::from_fn(x.rows(), d, |_, j| self.params[b + j]);
        gemm_acc(x.data(), &weff, y.data_mut(), x.rows(), d, d);
        if layer + 1 < self.layout.fine.len() {
            y = y.map(|v| v.max(T::zero()));
        }
        Ok(y)
    }

    fn fine_forward(&self, fw: &FineWeights<T>, x0: Vec<T>, rows: usize) -> FineCache<T> {
        let d = self.config.fine_width();
        let nc = self.config.vocab_size;
        let mut inputs = vec![x0];
        let mut pre = Vec::new();
        for (n, w) in fw.hidden.iter().enumerate() {
            let b = self.layout.fine[n].1;
            let mut z = Vec::with_capacity(rows * d);
            for _ in 0..rows {
                z.extend_from_slice(&self.params[b..b + d]);
            }
            gemm_acc(inputs.last().unwrap(), w, &mut z, rows, d, d);
            inputs.push(z.iter().map(|&v| v.max(T::zero())).collect());
            pre.push(z);
        }
        let mut logits = Vec::with_capacity(rows * nc);
        for _ in 0..rows {
            logits.extend_from_slice(&fw.last_bias);
        }
        gemm_acc(inputs.last().unwrap(), &fw.last, &mut logits, rows, d, nc);
        FineCache { inputs, pre, logits }
    }

    /// Returns the gradient with respect to the history part of the input.
    fn fine_backward(&self, fw: &FineWeights<T>, cache: &FineCache<T>, rows: usize, dlogits: &[T], grad: &mut [T]) -> Vec<T> {
        let d = self.config.fine_width();
        let (e, nc) = (self.config.n_emb, self.config.vocab_size);
        let n_layers = self.layout.fine.len();
        let (w_last, b_last) = self.layout.fine[n_layers - 1];
        let mut dw = vec![T::zero(); d * nc];
        gemm_tn_acc(&cache.inputs[n_layers - 1], dlogits, &mut dw, rows, d, nc);
        let mask = &self.masks[n_layers - 1];
        for j in 0..d {
            for k in 0..nc {
                if mask[j * d + e + k] {
                    grad[w_last + j * d + e + k] += dw[j * nc + k];
                }
            }
        }
        col_sum_acc(dlogits, &mut grad[b_last + e..b_last + d], nc);
        let mut dx = vec![T::zero(); rows * d];
        gemm_nt_acc(dlogits, &fw.last, &mut dx, rows, nc, d);
        for n in (0..n_layers - 1).rev() {
            let (w, b) = self.layout.fine[n];
            for (g, &z) in dx.iter_mut().zip(&cache.pre[n]) {
                if z <= T::zero() {
                    *g = T::zero();
                }
            }
            let mut dwn = vec![T::zero(); d * d];
            gemm_tn_acc(&cache.inputs[n], &dx, &mut dwn, rows, d, d);
            for ((g, &v), &keep) in grad[w..w + d * d].iter_mut().zip(&dwn).zip(&self.masks[n]) {
                if keep {
                    *g += v;
                }
            }
            col_sum_acc(&dx, &mut grad[b..b + d], d);
            let mut prev = vec![T::zero(); rows * d];
            gemm_nt_acc(&dx, &fw.hidden[n], &mut prev, rows, d, d);
            dx = prev;
        }
        let mut dh = Vec::with_capacity(rows * e);
        for row in dx.chunks_exact(d) {
            dh.extend_from_slice(&row[..e]);
        }
        dh
    }

    fn head_forward(&self, history: &[T], rows: usize) -> Vec<T> {
        let (e, nc) = (self.config.n_emb, self.config.vocab_size);
        let (w, b) = self.layout.head.expect("coarse-only head");
        let mut logits = Vec::with_capacity(rows * nc);
        for _ in 0..rows {
            logits.extend_from_slice(&self.params[b..b + nc]);
        }
        gemm_acc(&history[..rows * e], &self.params[w..w + e * nc], &mut logits, rows, e, nc);
        logits
    }

    /// Logits for rows `1..n` of `m` given a prepared trace over rows
    /// `0..n−1`.
    fn logits_from_trace(&self, fw: &FineWeights<T>, trace: &CoarseTrace<T>, m: &RecordMatrix) -> (Vec<T>, Option<FineCache<T>>) {
        let rows = trace.rows();
        match self.config.mode {
            Mode::CoarseOnly => (self.head_forward(trace.history(), rows), None),
            Mode::Full => {
                let e = self.config.n_emb;
                let d = self.config.fine_width();
                let mut x0 = Vec::with_capacity(rows * d);
                for t in 0..rows {
                    x0.extend_from_slice(trace.history_row(t));
                    x0.extend(m.row(t + 1).iter().map(|&b| if b != 0 { T::one() } else { T::zero() }));
                }
                debug_assert_eq!(x0.len(), rows * (e + self.config.vocab_size));
                let cache = self.fine_forward(fw, x0, rows);
                (cache.logits.clone(), Some(cache))
            }
        }
    }

    /// Logits for every row after the first of `m`, `(rows−1) × |C|`.
    pub fn logits(&self, m: &RecordMatrix) -> Result<Tensor<T>> {
        self.check_matrix(m)?;
        if m.rows() < 2 {
            return Err(HaloError::Shape("a record matrix needs at least two rows".into()));
        }
        let rows: Vec<&[u8]> = (0..m.rows() - 1).map(|t| m.row(t)).collect();
        let trace = self.coarse_trace(&rows)?;
        let (logits, _) = self.logits_from_trace(&self.fine_weights(), &trace, m);
        Tensor::from_vec(m.rows() - 1, self.config.vocab_size, logits)
    }

    /// Output probabilities `O`, `(rows−1) × |C|`.
    pub fn model_forward(&self, m: &RecordMatrix) -> Result<Tensor<T>> {
        Ok(self.logits(m)?.map(sigmoid))
    }

    /// Logit of code column `col` in the row after `history`, given the bits
    /// of that row chosen so far (`row`; later columns are ignored).
    /// Bit-identical to the corresponding entry of [`Self::logits`].
    pub fn code_logit(&self, fw: &FineWeights<T>, history: &[T], row: &[u8], col: usize) -> T {
        let d = self.config.fine_width();
        let nc = self.config.vocab_size;
        let mut x: Vec<T> = Vec::with_capacity(d);
        x.extend_from_slice(history);
        x.extend(row.iter().map(|&b| if b != 0 { T::one() } else { T::zero() }));
        for (n, w) in fw.hidden.iter().enumerate() {
            let b = self.layout.fine[n].1;
            let mut z = self.params[b..b + d].to_vec();
            gemm_acc(&x, w, &mut z, 1, d, d);
            x = z.into_iter().map(|v| v.max(T::zero())).collect();
        }
        let mut s = fw.last_bias[col];
        for (j, &xj) in x.iter().enumerate() {
            s += xj * fw.last[j * nc + col];
        }
        s
    }

    /// Coarse-only logits of the row after `history`.
    pub fn head_logits(&self, history: &[T]) -> Vec<T> {
        self.head_forward(history, 1)
    }

    /// Sum of BCE terms over rows `1..true_rows`, the number of terms, and
    /// the unscaled gradient accumulated into `grad`.
    fn accumulate_record(&self, fw: &FineWeights<T>, m: &RecordMatrix, grad: &mut [T]) -> Result<(T, usize)> {
        let r = m.true_rows();
        if r < 2 {
            return Ok((T::zero(), 0));
        }
        self.check_matrix(m)?;
        let nc = self.config.vocab_size;
        let rows: Vec<&[u8]> = (0..r - 1).map(|t| m.row(t)).collect();
        let trace = self.coarse_trace(&rows)?;
        let (logits, cache) = self.logits_from_trace(fw, &trace, m);
        let mut sum = T::zero();
        let mut dlogits = vec![T::zero(); logits.len()];
        for t in 0..r - 1 {
            for (i, &y) in m.row(t + 1).iter().enumerate() {
                let z = logits[t * nc + i];
                let y = if y != 0 { T::one() } else { T::zero() };
                sum += bce_term(z, y);
                dlogits[t * nc + i] = sigmoid(z) - y;
            }
        }
        if !sum.is_finite() {
            return Err(HaloError::NonFinite(format!("loss of a record with {r} rows")));
        }
        let d_hist = match (&self.config.mode, cache) {
            (Mode::Full, Some(cache)) => self.fine_backward(fw, &cache, r - 1, &dlogits, grad),
            _ => {
                let e = self.config.n_emb;
                let (w, b) = self.layout.head.expect("coarse-only head");
                gemm_tn_acc(&trace.history()[..(r - 1) * e], &dlogits, &mut grad[w..w + e * nc], r - 1, e, nc);
                col_sum_acc(&dlogits, &mut grad[b..b + nc], nc);
                let mut dh = vec![T::zero(); (r - 1) * e];
                gemm_nt_acc(&dlogits, &self.params[w..w + e * nc], &mut dh, r - 1, nc, e);
                dh
            }
        };
        trace.backward(self, &rows, d_hist, grad);
        Ok((sum, (r - 1) * nc))
    }

    /// Mean BCE over every unmasked output of the batch and its gradient.
    /// Padding rows (beyond `true_rows`) never contribute.
    pub fn loss_and_grad<M: Borrow<RecordMatrix> + Sync>(&self, batch: &[M]) -> Result<(T, Vec<T>)> {
        let fw = self.fine_weights();
        let n = self.params.len();
        let parts: Vec<Result<(T, usize, Vec<T>)>> = batch
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut grad = vec![T::zero(); n];
                let mut sum = T::zero();
                let mut count = 0;
                for m in chunk {
                    let (s, c) = self.accumulate_record(&fw, m.borrow(), &mut grad)?;
                    sum += s;
                    count += c;
                }
                Ok((sum, count, grad))
            })
            .collect();
        let mut total = T::zero();
        let mut count = 0usize;
        let mut grad = vec![T::zero(); n];
        for part in parts {
            let (s, c, g) = part?;
            total += s;
            count += c;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += *b;
            }
        }
        if count == 0 {
            return Err(HaloError::EmptyMask);
        }
        let scale = T::one() / T::of(count as f64);
        for g in &mut grad {
            *g *= scale;
        }
        Ok((total * scale, grad))
    }

    /// Mean BCE over the batch without gradients.
    pub fn training_loss<M: Borrow<RecordMatrix> + Sync>(&self, batch: &[M]) -> Result<T> {
        let (sum, count) = self.loss_sum(batch)?;
        if count == 0 {
            return Err(HaloError::EmptyMask);
        }
        Ok(sum / T::of(count as f64))
    }

    /// Sum of BCE terms and their count over the batch.
    pub fn loss_sum<M: Borrow<RecordMatrix> + Sync>(&self, batch: &[M]) -> Result<(T, usize)> {
        let fw = self.fine_weights();
        let parts: Vec<Result<(T, usize)>> = batch
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut sum = T::zero();
                let mut count = 0;
                for m in chunk {
                    let (s, c) = self.record_bce(&fw, m.borrow())?;
                    sum += s;
                    count += c;
                }
                Ok((sum, count))
            })
            .collect();
        let mut sum = T::zero();
        let mut count = 0;
        for p in parts {
            let (s, c) = p?;
            sum += s;
            count += c;
        }
        Ok((sum, count))
    }

    fn record_bce(&self, fw: &FineWeights<T>, m: &RecordMatrix) -> Result<(T, usize)> {
        let r = m.true_rows();
        if r < 2 {
            return Ok((T::zero(), 0));
        }
        let lp = self.log_prob_with(fw, m, |_, _| true)?;
        Ok((-lp, (r - 1) * self.config.vocab_size))
    }

    /// `log P(R)` over rows `1..true_rows`, every column.
    pub fn record_log_prob(&self, m: &RecordMatrix) -> Result<T> {
        self.log_prob_where(m, |_, _| true)
    }

    /// Sum of `log P(R[t,i] | earlier)` over rows `1..true_rows` and the
    /// positions where `free(t, i)` holds. Fixed positions still condition
    /// later ones.
    pub fn log_prob_where(&self, m: &RecordMatrix, free: impl Fn(usize, usize) -> bool) -> Result<T> {
        self.log_prob_with(&self.fine_weights(), m, free)
    }

    fn log_prob_with(&self, fw: &FineWeights<T>, m: &RecordMatrix, free: impl Fn(usize, usize) -> bool) -> Result<T> {
        self.check_matrix(m)?;
        let r = m.true_rows();
        if r < 2 {
            return Err(HaloError::Shape("a record matrix needs at least two rows".into()));
        }
        let nc = self.config.vocab_size;
        let rows: Vec<&[u8]> = (0..r - 1).map(|t| m.row(t)).collect();
        let trace = self.coarse_trace(&rows)?;
        let (logits, _) = self.logits_from_trace(fw, &trace, m);
        let mut lp = T::zero();
        for t in 1..r {
            for (i, &y) in m.row(t).iter().enumerate() {
                if free(t, i) {
                    let y = if y != 0 { T::one() } else { T::zero() };
                    lp -= bce_term(logits[(t - 1) * nc + i], y);
                }
            }
        }
        if !lp.is_finite() {
            return Err(HaloError::NonFinite("record log-probability".into()));
        }
        Ok(lp)
    }
}
