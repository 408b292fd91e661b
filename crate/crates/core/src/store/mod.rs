//! On-disk embedding matrices and the analysis-set manifest.

mod embeddings;
mod format;
mod manifest;

use std::path::PathBuf;

use thiserror::Error;

pub use embeddings::ClassEmbeddings;
pub use format::{read_embeddings, write_embeddings, EMB1_MAGIC, HEADER_LEN};
pub use manifest::{
    read_manifest, AnalysisSetManifest, AssociationDecl, ClassEntry, PairDecl, Role, SnapshotEntry,
};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest JSON: {0}")]
    Parse(String),
    #[error("manifest schema violation: {0}")]
    Schema(String),
    #[error("manifest references unknown {kind} '{id}'")]
    Reference { kind: &'static str, id: String },
    #[error("bad embedding file: {0}")]
    Format(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },
    #[error("row {row} is the zero vector")]
    ZeroVector { row: usize },
}
