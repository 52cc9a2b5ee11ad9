//! Record data model, vocabulary, discretization, matrix encoding and
//! dataset I/O.

mod discretize;
mod io;
mod matrix;
mod record;
mod split;
mod vocab;

pub use discretize::{Bucket, BucketConfig, BucketSpec, BucketTable, Discretizer};
pub use io::{load_records, read_records, save_records, write_records};
pub use matrix::{decode_matrix, encode_record, RecordMatrix, DEFAULT_MAX_VISITS, FRAME_ROWS};
pub use record::{Record, Visit};
pub use split::{split_dataset, split_sizes};
pub use vocab::{bucket_code_id, CodeKind, Entry, Vocabulary, END_CODE, GAP_VARIABLE, START_CODE};
