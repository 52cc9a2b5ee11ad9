//! The code universe: medical codes, labels, bucket codes and the two
//! framing codes, plus the seeded column permutation that fixes the
//! intra-visit order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::discretize::{Bucket, BucketConfig, BucketTable, Discretizer};
use super::record::Record;
use crate::error::{HaloError, Result};
use crate::rng::{self, Rng};

pub const START_CODE: &str = "<start>";
pub const END_CODE: &str = "<end>";
/// Name of the continuous variable holding inter-visit gaps.
pub const GAP_VARIABLE: &str = "gap_days";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeKind {
    Medical,
    Label,
    GapBucket,
    LabBucket,
    Start,
    End,
}

impl CodeKind {
    pub fn is_bucket(self) -> bool {
        matches!(self, CodeKind::GapBucket | CodeKind::LabBucket)
    }

    /// Codes that describe a clinical visit (counted by the statistics).
    pub fn is_clinical(self) -> bool {
        matches!(self, CodeKind::Medical | CodeKind::GapBucket | CodeKind::LabBucket)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub id: String,
    pub kind: CodeKind,
}

/// On-disk layout of `vocab.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabFile {
    seed: u64,
    entries: Vec<Entry>,
    buckets: BTreeMap<String, Vec<[f64; 2]>>,
    permutation: Vec<usize>,
}

/// Bucket code id for bucket `index` (0-based) of `variable`: `variable#k`, k 1-based.
pub fn bucket_code_id(variable: &str, index: usize) -> String {
    format!("{variable}#{}", index + 1)
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    seed: u64,
    entries: Vec<Entry>,
    discretizer: Discretizer,
    /// entry index -> matrix column
    permutation: Vec<usize>,
    /// matrix column -> entry index
    inverse: Vec<usize>,
    by_id: HashMap<String, usize>,
    /// entry index -> (variable, bucket index) for bucket codes
    bucket_of: Vec<Option<(String, usize)>>,
    /// variable -> matrix columns of its buckets, in bucket order
    variable_columns: BTreeMap<String, Vec<usize>>,
    kinds_by_column: Vec<CodeKind>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.entries == other.entries
            && self.discretizer == other.discretizer
            && self.permutation == other.permutation
    }
}

impl Vocabulary {
    /// Collects every observed code, label and continuous variable.
    pub fn build(records: &[Record], bucket_config: &BucketConfig, seed: u64) -> Result<Self> {
        if records.is_empty() {
            return Err(HaloError::EmptyCorpus);
        }
        let mut medical = BTreeSet::new();
        let mut labels = BTreeSet::new();
        let mut observed: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in records {
            labels.extend(r.labels.iter().cloned());
            for v in &r.visits {
                medical.extend(v.codes.iter().cloned());
                for (name, &x) in &v.labs {
                    if name == GAP_VARIABLE {
                        return Err(HaloError::Config(format!(
                            "lab name `{GAP_VARIABLE}` is reserved for visit gaps"
                        )));
                    }
                    observed.entry(name.clone()).or_default().push(x);
                }
                if let Some(g) = v.gap_days {
                    observed.entry(GAP_VARIABLE.to_string()).or_default().push(g);
                }
            }
        }
        let discretizer = Discretizer::build(bucket_config, &observed)?;
        Self::from_parts(seed, medical, labels, discretizer)
    }

    /// Assembles a vocabulary from explicit code sets.
    pub fn from_parts(
        seed: u64,
        medical: BTreeSet<String>,
        labels: BTreeSet<String>,
        discretizer: Discretizer,
    ) -> Result<Self> {
        let mut entries = Vec::new();
        entries.extend(medical.into_iter().map(|id| Entry { id, kind: CodeKind::Medical }));
        entries.extend(labels.into_iter().map(|id| Entry { id, kind: CodeKind::Label }));
        for (name, table) in discretizer.tables() {
            let kind = if name == GAP_VARIABLE { CodeKind::GapBucket } else { CodeKind::LabBucket };
            for i in 0..table.len() {
                entries.push(Entry { id: bucket_code_id(name, i), kind });
            }
        }
        entries.push(Entry { id: START_CODE.into(), kind: CodeKind::Start });
        entries.push(Entry { id: END_CODE.into(), kind: CodeKind::End });
        let mut permutation: Vec<usize> = (0..entries.len()).collect();
        rng::shuffle(&mut permutation, &mut rng::seeded(seed));
        Self::assemble(seed, entries, discretizer, permutation)
    }

    fn assemble(
        seed: u64,
        entries: Vec<Entry>,
        discretizer: Discretizer,
        permutation: Vec<usize>,
    ) -> Result<Self> {
        let n = entries.len();
        if permutation.len() != n {
            return Err(HaloError::Config(format!(
                "permutation has {} entries for {} codes",
                permutation.len(),
                n
            )));
        }
        let mut inverse = vec![usize::MAX; n];
        for (e, &c) in permutation.iter().enumerate() {
            if c >= n || inverse[c] != usize::MAX {
                return Err(HaloError::Config("permutation is not a bijection".into()));
            }
            inverse[c] = e;
        }
        let mut by_id = HashMap::with_capacity(n);
        for (i, e) in entries.iter().enumerate() {
            if by_id.insert(e.id.clone(), i).is_some() {
                return Err(HaloError::Config(format!("duplicate code id `{}`", e.id)));
            }
        }
        let count = |k: CodeKind| entries.iter().filter(|e| e.kind == k).count();
        if count(CodeKind::Start) != 1 || count(CodeKind::End) != 1 {
            return Err(HaloError::Config("exactly one start and one end code required".into()));
        }
        let mut bucket_of = vec![None; n];
        let mut variable_columns = BTreeMap::new();
        for (name, table) in discretizer.tables() {
            let mut cols = Vec::with_capacity(table.len());
            for i in 0..table.len() {
                let id = bucket_code_id(name, i);
                let e = *by_id
                    .get(&id)
                    .ok_or_else(|| HaloError::Config(format!("missing bucket code `{id}`")))?;
                if !entries[e].kind.is_bucket() {
                    return Err(HaloError::Config(format!("`{id}` is not a bucket code")));
                }
                bucket_of[e] = Some((name.clone(), i));
                cols.push(permutation[e]);
            }
            variable_columns.insert(name.clone(), cols);
        }
        if let Some(e) = entries.iter().position(|e| e.kind.is_bucket() && bucket_of[by_id[&e.id]].is_none()) {
            return Err(HaloError::Config(format!("bucket code `{}` has no table", entries[e].id)));
        }
        let kinds_by_column = inverse.iter().map(|&e| entries[e].kind).collect();
        Ok(Vocabulary {
            seed,
            entries,
            discretizer,
            permutation,
            inverse,
            by_id,
            bucket_of,
            variable_columns,
            kinds_by_column,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn discretizer(&self) -> &Discretizer {
        &self.discretizer
    }

    /// Matrix column of a code id.
    pub fn column_of(&self, id: &str) -> Result<usize> {
        self.by_id
            .get(id)
            .map(|&e| self.permutation[e])
            .ok_or_else(|| HaloError::UnknownCode(id.to_string()))
    }

    pub fn id_at(&self, column: usize) -> &str {
        &self.entries[self.inverse[column]].id
    }

    pub fn kind_at(&self, column: usize) -> CodeKind {
        self.kinds_by_column[column]
    }

    pub fn kinds_by_column(&self) -> &[CodeKind] {
        &self.kinds_by_column
    }

    pub fn start_column(&self) -> usize {
        self.column_of(START_CODE).expect("start code present")
    }

    pub fn end_column(&self) -> usize {
        self.column_of(END_CODE).expect("end code present")
    }

    pub fn columns_of_kind(&self, kind: CodeKind) -> Vec<usize> {
        (0..self.len()).filter(|&c| self.kind_at(c) == kind).collect()
    }

    pub fn ids_of_kind(&self, kind: CodeKind) -> Vec<&str> {
        self.entries.iter().filter(|e| e.kind == kind).map(|e| e.id.as_str()).collect()
    }

    /// Columns of each continuous variable's buckets, in bucket order.
    pub fn variable_columns(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.variable_columns
    }

    /// Bucket code id holding `value` for `variable` (clamped at the ends).
    pub fn discretize_value(&self, variable: &str, value: f64) -> Result<&str> {
        let idx = self.discretizer.bucket_index(variable, value)?;
        let col = self.variable_columns[variable][idx];
        Ok(self.id_at(col))
    }

    /// Variable name and bucket for a bucket code.
    pub fn bucket_for(&self, id: &str) -> Result<(&str, Bucket)> {
        let e = *self.by_id.get(id).ok_or_else(|| HaloError::UnknownCode(id.to_string()))?;
        let (name, i) = self.bucket_of[e]
            .as_ref()
            .ok_or_else(|| HaloError::NotABucket(id.to_string()))?;
        let table = self.discretizer.table(name)?;
        Ok((name.as_str(), table.buckets()[*i]))
    }

    /// Uniform draw within the bucket behind `id`.
    pub fn reconstruct_value(&self, id: &str, rng: &mut Rng) -> Result<f64> {
        let (_, bucket) = self.bucket_for(id)?;
        Ok(bucket.sample(rng))
    }

    fn to_file(&self) -> VocabFile {
        VocabFile {
            seed: self.seed,
            entries: self.entries.clone(),
            buckets: self
                .discretizer
                .tables()
                .iter()
                .map(|(k, t)| (k.clone(), t.buckets().iter().map(|b| [b.lo, b.hi]).collect()))
                .collect(),
            permutation: self.permutation.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: VocabFile = serde_json::from_str(text)?;
        let mut tables = BTreeMap::new();
        for (name, ranges) in &file.buckets {
            let buckets = ranges.iter().map(|r| Bucket { lo: r[0], hi: r[1] }).collect();
            tables.insert(name.clone(), BucketTable::new(name, buckets)?);
        }
        Self::assemble(file.seed, file.entries, Discretizer::from_tables(tables), file.permutation)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 over the compact serialized form; ties checkpoints to vocabularies.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.to_file()).expect("vocabulary serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Picks one of `n` options uniformly; shared by the decoder.
    pub(crate) fn pick(rng: &mut Rng, n: usize) -> usize {
        rng.gen_range(0..n)
    }
}
