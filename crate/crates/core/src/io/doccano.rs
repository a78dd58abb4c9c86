//! Doccano sequence-labeling JSONL: `{"text": ..., "label": [[start, end, label], ...]}`.

use serde_json::{json, Map, Value};

use crate::model::{Document, Entity, Metadata, Scalar, Segment};
use crate::span::{self, Span};

use super::ConvertError;

fn bad(msg: impl Into<String>) -> ConvertError {
    ConvertError::MalformedJson(msg.into())
}

/// Parse one JSONL line. Extra scalar keys become document metadata.
pub fn parse_doccano_jsonl(line: &str) -> Result<(Document, Vec<Entity>), ConvertError> {
    let value: Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| bad("expected a JSON object"))?;
    let text = obj
        .get("text")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("missing string field \"text\""))?;

    let mut metadata = Metadata::new();
    for (k, v) in obj {
        if k == "text" || k == "label" {
            continue;
        }
        let scalar = match v {
            Value::Null => Scalar::Null,
            Value::Bool(b) => Scalar::Bool(*b),
            Value::Number(n) => match n.as_i64() {
                Some(i) => Scalar::Int(i),
                None => Scalar::Float(n.as_f64().unwrap_or(f64::NAN)),
            },
            Value::String(s) => Scalar::Str(s.clone()),
            _ => continue,
        };
        metadata.insert(k.clone(), scalar);
    }
    let doc = Document::new(text, metadata);

    let labels = match obj.get("label") {
        None => &[][..],
        Some(Value::Array(a)) => a.as_slice(),
        Some(_) => return Err(bad("\"label\" must be an array")),
    };
    let mut entities = Vec::with_capacity(labels.len());
    for triple in labels {
        let (start, end, label) = match triple.as_array().map(Vec::as_slice) {
            Some([s, e, l]) => (
                s.as_u64().ok_or_else(|| bad("label start must be an integer"))? as usize,
                e.as_u64().ok_or_else(|| bad("label end must be an integer"))? as usize,
                l.as_str().ok_or_else(|| bad("label name must be a string"))?,
            ),
            _ => return Err(bad(format!("label entry {triple} is not [start, end, label]"))),
        };
        if start > end || end > doc.len() {
            return Err(ConvertError::OutOfBounds {
                start,
                end,
                len: doc.len(),
            });
        }
        let surface = span::char_slice(doc.text(), start, end);
        entities.push(Segment::new(label, surface, vec![Span::original(start, end)])?);
    }
    Ok((doc, entities))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoccanoLine {
    pub line: String,
    /// Discontinuous entities cut down to their first fragment.
    pub warnings: usize,
}

/// One JSONL line (without the trailing newline) for `doc` and `entities`.
///
/// Doccano has no discontinuous spans, so such entities keep only their
/// first projected fragment and bump the warning counter.
pub fn emit_doccano_jsonl<'a>(
    doc: &Document,
    entities: impl IntoIterator<Item = &'a Entity>,
) -> Result<DoccanoLine, ConvertError> {
    let mut warnings = 0;
    let mut labels = Vec::new();
    for e in entities {
        let spans = e.normalized_spans();
        let Some(first) = spans.first() else {
            return Err(ConvertError::EmptyProjection(e.id.clone()));
        };
        if spans.len() > 1 {
            log::warn!("entity {} is discontinuous; keeping its first fragment", e.id);
            warnings += 1;
        }
        labels.push(json!([first.start, first.end, e.label]));
    }
    let mut obj = Map::new();
    obj.insert("text".into(), json!(doc.text()));
    obj.insert("label".into(), Value::Array(labels));
    for (k, v) in &doc.metadata {
        obj.insert(k.clone(), serde_json::to_value(v).expect("scalar"));
    }
    let line = serde_json::to_string(&Value::Object(obj)).expect("json values serialize");
    Ok(DoccanoLine { line, warnings })
}
