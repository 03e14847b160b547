//! Attribute-annotated records, the predicate vocabulary and dataset I/O.

mod dataset;
mod features;
mod record;
mod term;
mod vocab;

use thiserror::Error;

pub use dataset::{parse_dataset, parse_records, records_to_jsonl, Dataset};
pub use features::{cosine_similarity, featurize, FeatureVector};
pub use record::{AttributeRecord, RecordBuilder};
pub use term::{format_number, is_plain_ident, is_predicate_ident, PredicateAtom, Term};
pub use vocab::{
    ArgKind, Comparison, PredicateDecl, PredicateRole, Vocabulary, GREATER, OBJECT, SMALLER,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<DataError>,
    },
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("unknown predicate {0:?}")]
    UnknownPredicate(String),
    #[error("predicate {name} expects {expected} arguments, found {found}")]
    ArityMismatch {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid atom {atom}: {reason}")]
    InvalidAtom { atom: String, reason: String },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("vocabulary: {0}")]
    Vocabulary(String),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("a dataset needs at least 2 labels, found {0}")]
    TooFewLabels(usize),
}

impl DataError {
    pub fn at_line(self, line: usize) -> Self {
        DataError::AtLine {
            line,
            source: Box::new(self),
        }
    }
}
