//! Converters between external formats and the core model.

pub mod brat;
pub mod doccano;
pub mod native;
pub mod text;

use std::path::PathBuf;

use thiserror::Error;

use crate::model::ModelError;

pub use brat::{canonicalize_brat, emit_brat, parse_brat, BratDocument};
pub use doccano::{emit_doccano_jsonl, parse_doccano_jsonl, DoccanoLine};
pub use native::{parse_document_json, serialize_document_json};
pub use text::load_text_documents;

#[derive(Debug, Error)]
pub enum ConvertError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid UTF-8 at byte {byte_offset}")]
    Decode { path: PathBuf, byte_offset: usize },
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: surface text {found:?} does not match document text {expected:?}")]
    SurfaceMismatch {
        line: usize,
        expected: String,
        found: String,
    },
    #[error("annotation {0} does not project onto the document text")]
    EmptyProjection(String),
    #[error("relation {relation} points at {target}, which is not exported")]
    UnknownReference { relation: String, target: String },
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("span [{start}, {end}) exceeds text length {len}")]
    OutOfBounds { start: usize, end: usize, len: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl ConvertError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ConvertError::Io {
            path: path.into(),
            source,
        }
    }
}
