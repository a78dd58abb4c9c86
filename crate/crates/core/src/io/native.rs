//! Native JSON: one document per file, lossless including span chains and ids.

use crate::model::Document;

use super::ConvertError;

pub fn serialize_document_json(doc: &Document) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents serialize");
    s.push('\n');
    s
}

/// Parse and re-validate a document (bounds, duplicate ids, relation targets).
pub fn parse_document_json(text: &str) -> Result<Document, ConvertError> {
    serde_json::from_str(text).map_err(|e| ConvertError::MalformedJson(e.to_string()))
}
