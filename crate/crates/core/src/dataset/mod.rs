//! Labeled sample ingestion: manifests, the three-level class hierarchy,
//! stratified validation splits and batch streams of preprocessed tensors.

mod hierarchy;
mod manifest;
mod source;
mod split;
mod stream;

pub use hierarchy::{build_hierarchy, HierarchyTable, Level};
pub use manifest::{parse_manifest, parse_manifest_str, LabeledSample, Manifest, SkippedEntry};
pub use source::{FsSource, ImageSource, MemorySource};
pub use split::{split_train_val, DatasetSplit, SplitRecord};
pub use stream::{Batch, BatchStream, StreamOptions};

use thiserror::Error;

/// Number of classes at each annotation level.
pub const L1_CLASSES: usize = 6;
pub const L2_CLASSES: usize = 20;
pub const L3_CLASSES: usize = 82;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{source_name}:{line}: malformed manifest line: {reason}")]
    Malformed {
        source_name: String,
        line: usize,
        reason: String,
    },
    #[error("{source_name}:{line}: {level} label {value} out of range (must be < {limit})")]
    LabelOutOfRange {
        source_name: String,
        line: usize,
        level: &'static str,
        value: u64,
        limit: usize,
    },
    #[error("inconsistent hierarchy: {level} class {child} has parents {first} and {second}")]
    InconsistentParent {
        level: &'static str,
        child: usize,
        first: usize,
        second: usize,
    },
    #[error("sample {id} ({path}) does not match the hierarchy: {reason}")]
    HierarchyMismatch {
        id: usize,
        path: String,
        reason: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad split record {path}: {reason}")]
    SplitRecord { path: String, reason: String },
}

impl DatasetError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
