//! Binary matrix encoding of a record: start row, label row, one row per
//! clinical visit, end row, then zero padding.

use std::collections::BTreeSet;

use super::record::{Record, Visit};
use super::vocab::{CodeKind, Vocabulary, GAP_VARIABLE};
use crate::error::{HaloError, Result};
use crate::rng::Rng;

/// Default visit cap.
pub const DEFAULT_MAX_VISITS: usize = 96;

/// Rows reserved for framing: start, label and end.
pub const FRAME_ROWS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RecordMatrix {
    rows: usize,
    cols: usize,
    true_rows: usize,
    data: Vec<u8>,
}

impl RecordMatrix {
    /// All-zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize, true_rows: usize) -> Self {
        assert!(true_rows <= rows, "true_rows {true_rows} exceeds rows {rows}");
        RecordMatrix {
            rows,
            cols,
            true_rows,
            data: vec![0; rows * cols],
        }
    }

    /// Wraps raw 0/1 data; any nonzero byte counts as a set bit.
    pub fn from_rows(rows: Vec<Vec<u8>>, cols: usize, true_rows: usize) -> Result<Self> {
        if true_rows > rows.len() {
            return Err(HaloError::Shape(format!(
                "true_rows {true_rows} exceeds {} rows",
                rows.len()
            )));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(HaloError::Shape(format!("row {i} has {} columns, want {cols}", r.len())));
            }
            data.extend(r.iter().map(|&b| (b != 0) as u8));
        }
        Ok(RecordMatrix { rows: rows.len(), cols, true_rows, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn true_rows(&self) -> usize {
        self.true_rows
    }

    pub fn set_true_rows(&mut self, true_rows: usize) {
        assert!(true_rows <= self.rows);
        self.true_rows = true_rows;
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.cols + col] != 0
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, on: bool) {
        self.data[row * self.cols + col] = on as u8;
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [u8] {
        &mut self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Number of set bits.
    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b != 0).count()
    }

    /// Copy restricted to the first `true_rows` rows.
    pub fn trimmed(&self) -> RecordMatrix {
        RecordMatrix {
            rows: self.true_rows,
            cols: self.cols,
            true_rows: self.true_rows,
            data: self.data[..self.true_rows * self.cols].to_vec(),
        }
    }

    /// Copy extended with zero rows up to `rows` (never truncates).
    pub fn padded_to(&self, rows: usize) -> RecordMatrix {
        let rows = rows.max(self.rows);
        let mut data = self.data.clone();
        data.resize(rows * self.cols, 0);
        RecordMatrix { rows, cols: self.cols, true_rows: self.true_rows, data }
    }
}

fn set_visit_bits(m: &mut RecordMatrix, row: usize, visit: &Visit, vocab: &Vocabulary) -> Result<()> {
    for code in &visit.codes {
        let col = vocab.column_of(code)?;
        if vocab.kind_at(col) != CodeKind::Medical {
            return Err(HaloError::UnknownCode(format!("{code} (not a medical code)")));
        }
        m.set(row, col, true);
    }
    if let Some(g) = visit.gap_days {
        let id = vocab.discretize_value(GAP_VARIABLE, g)?;
        m.set(row, vocab.column_of(id)?, true);
    }
    for (name, &x) in &visit.labs {
        let id = vocab.discretize_value(name, x)?;
        m.set(row, vocab.column_of(id)?, true);
    }
    Ok(())
}

/// Encodes `record`, keeping its first `max_visits` visits.
pub fn encode_record(record: &Record, vocab: &Vocabulary, max_visits: usize) -> Result<RecordMatrix> {
    if max_visits == 0 {
        return Err(HaloError::Config("max_visits must be at least 1".into()));
    }
    let t = record.visits.len().min(max_visits);
    let mut m = RecordMatrix::zeros(max_visits + FRAME_ROWS, vocab.len(), t + FRAME_ROWS);
    m.set(0, vocab.start_column(), true);
    for label in &record.labels {
        let col = vocab.column_of(label)?;
        if vocab.kind_at(col) != CodeKind::Label {
            return Err(HaloError::UnknownCode(format!("{label} (not a label code)")));
        }
        m.set(1, col, true);
    }
    for (i, visit) in record.visits.iter().take(t).enumerate() {
        set_visit_bits(&mut m, i + 2, visit, vocab)?;
    }
    m.set(t + 2, vocab.end_column(), true);
    Ok(m)
}

/// Inverse of [`encode_record`], tolerant of malformed model output.
///
/// Rows from the first end code onward are dropped. A continuous variable
/// with several bucket bits set in one row takes one of them uniformly.
pub fn decode_matrix(matrix: &RecordMatrix, vocab: &Vocabulary, rng: &mut Rng) -> Record {
    let mut record = Record::default();
    let cols = matrix.cols().min(vocab.len());
    if matrix.true_rows() > 1 {
        record.labels = (0..cols)
            .filter(|&c| matrix.get(1, c) && vocab.kind_at(c) == CodeKind::Label)
            .map(|c| vocab.id_at(c).to_string())
            .collect();
    }
    let end = vocab.end_column();
    for row in 2..matrix.true_rows() {
        if end < cols && matrix.get(row, end) {
            break;
        }
        let codes: BTreeSet<String> = (0..cols)
            .filter(|&c| matrix.get(row, c) && vocab.kind_at(c) == CodeKind::Medical)
            .map(|c| vocab.id_at(c).to_string())
            .collect();
        let mut visit = Visit { codes, ..Visit::default() };
        for (name, columns) in vocab.variable_columns() {
            let set: Vec<usize> = columns.iter().copied().filter(|&c| c < cols && matrix.get(row, c)).collect();
            if set.is_empty() {
                continue;
            }
            let pick = set[Vocabulary::pick(rng, set.len())];
            let value = vocab
                .reconstruct_value(vocab.id_at(pick), rng)
                .expect("bucket column resolves to a bucket");
            if name == GAP_VARIABLE {
                visit.gap_days = Some(value);
            } else {
                visit.labs.insert(name.clone(), value);
            }
        }
        record.visits.push(visit);
    }
    record
}
