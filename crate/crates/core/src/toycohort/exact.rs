use super::params::ToyParams;
use crate::error::{HaloError, Result};
use crate::recordkit::RecordMatrix;
use crate::statseval::{same_visit_key, sequential_key, Normalization, StatKind, TableSet};

pub const MAX_EXACT_CODES: usize = 12;
pub const MAX_EXACT_VISITS: usize = 3;
pub const MAX_EXACT_LABELS: usize = 8;
pub const MAX_ENUMERATED_CELLS: usize = 20;

#[derive(Debug, Clone, Copy)]
enum Event {
    Any,
    Has(usize),
    Both(usize, usize),
    Then(usize, usize),
}

impl Event {
    /// Whether the transition `u → v` avoids the event.
    #[inline]
    fn avoids(self, u: usize, v: usize) -> bool {
        let bit = |m: usize, i: usize| m >> i & 1 == 1;
        match self {
            Event::Any => true,
            Event::Has(a) => !bit(v, a),
            Event::Both(a, b) => !(bit(v, a) && bit(v, b)),
            Event::Then(a, b) => !(bit(u, a) && bit(v, b)),
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `P(v | context)` for every visit bitmask `v`, codes drawn in index order.
fn visit_distribution(context: &[f64], incoming: &[Vec<(usize, f64)>], out: &mut [f64]) {
    for (v, slot) in out.iter_mut().enumerate() {
        let mut p = 1.0;
        for (i, &c) in context.iter().enumerate() {
            let mut logit = c;
            for &(f, w) in &incoming[i] {
                if v >> f & 1 == 1 {
                    logit += w;
                }
            }
            p *= if v >> i & 1 == 1 { sigmoid(logit) } else { sigmoid(-logit) };
        }
        *slot = p;
    }
}

/// Exact record- and visit-normalized code tables of the toy process.
///
/// Enumerates every label assignment and propagates, for each code event,
/// the probability mass of visit histories that have avoided it so far.
/// Cost grows as `4^n_codes`, hence the bounds.
pub fn exact_statistics(params: &ToyParams) -> Result<TableSet> {
    params.validate()?;
    if params.n_codes > MAX_EXACT_CODES || params.max_visits > MAX_EXACT_VISITS || params.n_labels > MAX_EXACT_LABELS {
        return Err(HaloError::Tractability(format!(
            "exact statistics need n_codes <= {MAX_EXACT_CODES}, max_visits <= {MAX_EXACT_VISITS}, n_labels <= {MAX_EXACT_LABELS}"
        )));
    }
    let n = params.n_codes;
    let s = 1usize << n;
    let mut events = vec![Event::Any];
    events.extend((0..n).map(Event::Has));
    for a in 0..n {
        events.extend((a + 1..n).map(|b| Event::Both(a, b)));
    }
    for a in 0..n {
        events.extend((0..n).map(|b| Event::Then(a, b)));
    }
    let incoming = params.incoming();
    let lengths = params.length_distribution();
    let c = params.continuation;

    let mut never = vec![0.0; events.len()];
    let mut visit_uni = vec![0.0; n];
    let mut visit_pair = vec![0.0; n * n];
    let mut visit_seq = vec![0.0; n * n];
    let mut row = vec![0.0; s];

    for labels in 0..1usize << params.n_labels {
        let weight: f64 = params
            .label_priors
            .iter()
            .enumerate()
            .map(|(l, &p)| if labels >> l & 1 == 1 { p } else { 1.0 - p })
            .product();
        if weight == 0.0 {
            continue;
        }
        let base: Vec<f64> = (0..n)
            .map(|i| {
                params.base_logits[i]
                    + (0..params.n_labels).filter(|l| labels >> l & 1 == 1).map(|l| params.label_weight(l, i)).sum::<f64>()
            })
            .collect();
        let context_after = |u: usize| -> Vec<f64> {
            (0..n).map(|i| base[i] + (0..n).filter(|j| u >> j & 1 == 1).map(|j| params.visit_weight(j, i)).sum::<f64>()).collect()
        };

        visit_distribution(&context_after(0), &incoming, &mut row);
        let mut mass: Vec<Vec<f64>> =
            events.iter().map(|e| (0..s).map(|v| if e.avoids(0, v) { row[v] } else { 0.0 }).collect()).collect();

        for t in 1..=params.max_visits {
            for (e, m) in mass.iter().enumerate() {
                never[e] += weight * lengths[t - 1] * m.iter().sum::<f64>();
            }
            let reach = weight * c.powi(t as i32 - 1);
            for (v, &pv) in mass[0].iter().enumerate() {
                if pv == 0.0 {
                    continue;
                }
                for a in (0..n).filter(|a| v >> a & 1 == 1) {
                    visit_uni[a] += reach * pv;
                    for b in (a + 1..n).filter(|b| v >> b & 1 == 1) {
                        visit_pair[a * n + b] += reach * pv;
                    }
                }
            }
            if t == params.max_visits {
                break;
            }
            let reach_next = weight * c.powi(t as i32);
            let mut next = vec![vec![0.0; s]; events.len()];
            for u in 0..s {
                if mass.iter().all(|m| m[u] == 0.0) {
                    continue;
                }
                visit_distribution(&context_after(u), &incoming, &mut row);
                let pu = mass[0][u];
                if pu > 0.0 {
                    let mut next_marginal = vec![0.0; n];
                    for (v, &pv) in row.iter().enumerate() {
                        for (b, nm) in next_marginal.iter_mut().enumerate() {
                            if v >> b & 1 == 1 {
                                *nm += pv;
                            }
                        }
                    }
                    for a in (0..n).filter(|a| u >> a & 1 == 1) {
                        for b in 0..n {
                            visit_seq[a * n + b] += reach_next * pu * next_marginal[b];
                        }
                    }
                }
                for (e, ev) in events.iter().enumerate() {
                    let fu = mass[e][u];
                    if fu == 0.0 {
                        continue;
                    }
                    for (v, &pv) in row.iter().enumerate() {
                        if ev.avoids(u, v) {
                            next[e][v] += fu * pv;
                        }
                    }
                }
            }
            mass = next;
        }
    }

    let name = |i: usize| params.code_name(i);
    let mut out = TableSet::default();
    for norm in Normalization::ALL {
        for kind in StatKind::ALL {
            out.get_mut(kind, norm);
        }
    }
    let visits: f64 = params.expected_visits();
    let adjacent: f64 = visits - 1.0;
    for (e, ev) in events.iter().enumerate() {
        let p = (1.0 - never[e]).clamp(0.0, 1.0);
        match *ev {
            Event::Any => {}
            Event::Has(a) => {
                out.get_mut(StatKind::Unigram, Normalization::Record).insert(name(a), p);
            }
            Event::Both(a, b) => {
                out.get_mut(StatKind::SameVisitBigram, Normalization::Record).insert(same_visit_key(&name(a), &name(b)), p);
            }
            Event::Then(a, b) => {
                out.get_mut(StatKind::SequentialVisitBigram, Normalization::Record)
                    .insert(sequential_key(&name(a), &name(b)), p);
            }
        }
    }
    for a in 0..n {
        out.get_mut(StatKind::Unigram, Normalization::Visit).insert(name(a), visit_uni[a] / visits);
        for b in 0..n {
            if b > a {
                out.get_mut(StatKind::SameVisitBigram, Normalization::Visit)
                    .insert(same_visit_key(&name(a), &name(b)), visit_pair[a * n + b] / visits);
            }
            if adjacent > 0.0 {
                out.get_mut(StatKind::SequentialVisitBigram, Normalization::Visit)
                    .insert(sequential_key(&name(a), &name(b)), visit_seq[a * n + b] / adjacent);
            }
        }
    }
    Ok(out)
}

/// Every `n_rows × n_cols` binary matrix, in binary counting order over
/// the row-major cells.
pub fn enumerate_matrices(n_rows: usize, n_cols: usize) -> Result<impl Iterator<Item = RecordMatrix>> {
    let cells = n_rows * n_cols;
    if cells > MAX_ENUMERATED_CELLS {
        return Err(HaloError::Tractability(format!(
            "{n_rows}x{n_cols} has more than {MAX_ENUMERATED_CELLS} cells"
        )));
    }
    Ok((0u64..1 << cells).map(move |k| {
        let mut m = RecordMatrix::zeros(n_rows, n_cols, n_rows);
        for cell in 0..cells {
            if k >> cell & 1 == 1 {
                m.set(cell / n_cols, cell % n_cols, true);
            }
        }
        m
    }))
}
