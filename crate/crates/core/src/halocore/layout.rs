use serde::Serialize;

use super::config::{Mode, ModelConfig};

/// Offsets of one decoder block's tensors in the flat parameter vector.
#[derive(Debug, Clone, Copy)]
pub struct BlockOffsets {
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub ff_w: usize,
    pub ff_b: usize,
    pub ff_v: usize,
    pub ff_c: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRole {
    Weight,
    Bias,
    Gain,
    /// Layer-norm shift.
    Shift,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamEntry {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
    pub role: ParamRole,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Named layout of the flat parameter vector.
#[derive(Debug, Clone)]
pub struct Layout {
    pub wte: usize,
    pub wpe: usize,
    pub blocks: Vec<BlockOffsets>,
    /// `(weight, bias)` per masked layer.
    pub fine: Vec<(usize, usize)>,
    pub head: Option<(usize, usize)>,
    pub entries: Vec<ParamEntry>,
    pub total: usize,
}

impl Layout {
    pub fn new(c: &ModelConfig) -> Self {
        let mut entries: Vec<ParamEntry> = Vec::new();
        let mut total = 0;
        let mut push = |name: String, shape: Vec<usize>, role: ParamRole| {
            let offset = total;
            total += shape.iter().product::<usize>();
            entries.push(ParamEntry { name, offset, shape, role });
            offset
        };
        let (e, f, d) = (c.n_emb, c.ff_width(), c.fine_width());
        let wte = push("wte".into(), vec![c.vocab_size, e], ParamRole::Weight);
        let wpe = push("wpe".into(), vec![c.rows_max(), e], ParamRole::Weight);
        let mut blocks = Vec::with_capacity(c.n_blocks);
        for b in 0..c.n_blocks {
            let mut p = |n: &str, shape: Vec<usize>, role| push(format!("block{b}.{n}"), shape, role);
            blocks.push(BlockOffsets {
                wq: p("wq", vec![e, e], ParamRole::Weight),
                wk: p("wk", vec![e, e], ParamRole::Weight),
                wv: p("wv", vec![e, e], ParamRole::Weight),
                wo: p("wo", vec![e, e], ParamRole::Weight),
                ln1_g: p("ln1.gain", vec![e], ParamRole::Gain),
                ln1_b: p("ln1.shift", vec![e], ParamRole::Shift),
                ff_w: p("ff.w", vec![e, f], ParamRole::Weight),
                ff_b: p("ff.b", vec![f], ParamRole::Bias),
                ff_v: p("ff.v", vec![f, e], ParamRole::Weight),
                ff_c: p("ff.c", vec![e], ParamRole::Bias),
                ln2_g: p("ln2.gain", vec![e], ParamRole::Gain),
                ln2_b: p("ln2.shift", vec![e], ParamRole::Shift),
            });
        }
        let mut fine = Vec::new();
        let mut head = None;
        match c.mode {
            Mode::Full => {
                for n in 0..c.n_masked_layers {
                    let w = push(format!("fine{n}.w"), vec![d, d], ParamRole::Weight);
                    let b = push(format!("fine{n}.b"), vec![d], ParamRole::Bias);
                    fine.push((w, b));
                }
            }
            Mode::CoarseOnly => {
                let w = push("head.w".into(), vec![e, c.vocab_size], ParamRole::Weight);
                let b = push("head.b".into(), vec![c.vocab_size], ParamRole::Bias);
                head = Some((w, b));
            }
        }
        Layout { wte, wpe, blocks, fine, head, entries, total }
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Dependency mask of masked layer `layer` (of `n_layers`) over the
/// `[history | codes]` layout, row = input unit, column = output unit.
/// History inputs feed everything; code input `j` feeds code outputs
/// `k >= j` on hidden layers and `k > j` on the final layer. History
/// outputs of hidden layers see history inputs only.
pub fn fine_mask(n_emb: usize, width: usize, layer: usize, n_layers: usize) -> Vec<bool> {
    let last = layer + 1 == n_layers;
    let mut m = vec![false; width * width];
    for j in 0..width {
        for k in 0..width {
            m[j * width + k] = if j < n_emb {
                true
            } else if k < n_emb {
                false
            } else if last {
                k > j
            } else {
                k >= j
            };
        }
    }
    m
}
