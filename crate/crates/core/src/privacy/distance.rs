use std::borrow::Borrow;

use crate::error::{HaloError, Result};
use crate::recordkit::RecordMatrix;

/// Number of differing bits between two matrices of one shape.
pub fn hamming_distance(a: &RecordMatrix, b: &RecordMatrix) -> Result<usize> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(HaloError::Shape(format!(
            "{}×{} against {}×{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(a.data().iter().zip(b.data()).filter(|(x, y)| x != y).count())
}

/// A bit-packed matrix or flag vector, for distances between many records.
/// Padding rows are zero, so records of different heights compare as if
/// padded to a common height.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitSet {
    cols: usize,
    words: Vec<u64>,
}

impl BitSet {
    fn from_bits(cols: usize, bits: impl Iterator<Item = bool>) -> Self {
        let mut words = Vec::new();
        for (i, b) in bits.enumerate() {
            if i % 64 == 0 {
                words.push(0);
            }
            if b {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        while words.last() == Some(&0) {
            words.pop();
        }
        BitSet { cols, words }
    }

    pub fn from_matrix(m: &RecordMatrix) -> Self {
        Self::from_bits(m.cols(), m.data().iter().map(|&b| b != 0))
    }

    /// Presence flags over an arbitrary feature space.
    pub fn from_flags(flags: &[bool]) -> Self {
        Self::from_bits(flags.len(), flags.iter().copied())
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words.get(i / 64).is_some_and(|w| w >> (i % 64) & 1 == 1)
    }

    pub fn distance(&self, other: &BitSet) -> usize {
        debug_assert_eq!(self.cols, other.cols);
        let (long, short) = if self.words.len() >= other.words.len() { (self, other) } else { (other, self) };
        let common: usize = long.words.iter().zip(&short.words).map(|(a, b)| (a ^ b).count_ones() as usize).sum();
        common + long.words[short.words.len()..].iter().map(|w| w.count_ones() as usize).sum::<usize>()
    }
}

/// Distance from `query` to its nearest neighbor in `pool` and that
/// neighbor's index (lowest on ties). `skip` excludes one pool index.
pub fn nearest<B: Borrow<BitSet>>(query: &BitSet, pool: &[B], skip: Option<usize>) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for (j, p) in pool.iter().enumerate() {
        if Some(j) == skip {
            continue;
        }
        let d = query.distance(p.borrow());
        if best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, j));
            if d == 0 {
                break;
            }
        }
    }
    best
}

pub(crate) fn check_columns(sets: &[&[BitSet]]) -> Result<()> {
    let mut cols = sets.iter().flat_map(|s| s.iter().map(|b| b.cols));
    if let Some(c) = cols.next() {
        if cols.any(|d| d != c) {
            return Err(HaloError::Shape("records encoded over different vocabularies".into()));
        }
    }
    Ok(())
}
