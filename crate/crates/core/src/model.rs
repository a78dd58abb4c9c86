//! Documents, annotations and attributes.
//!
//! A [`Document`] owns an immutable raw text and the annotations attached to
//! it. Annotations are [`Segment`]s (labeled text with a span chain back to
//! the raw text), entities (segments produced by recognizers) and
//! [`Relation`]s between two annotations of the same document. Both kinds can
//! carry [`Attribute`]s.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::span::{self, OriginalSpan, Span};

/// Fresh v4 UUID string.
pub fn new_id() -> String {
    uuid::Uuid::new_v4().to_string()
}

/// Scalar attribute and metadata values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl Scalar {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Scalar::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Scalar::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Null => f.write_str("null"),
            Scalar::Bool(b) => write!(f, "{b}"),
            Scalar::Int(i) => write!(f, "{i}"),
            Scalar::Float(x) => write!(f, "{x}"),
            Scalar::Str(s) => f.write_str(s),
        }
    }
}

impl From<bool> for Scalar {
    fn from(v: bool) -> Self {
        Scalar::Bool(v)
    }
}
impl From<i64> for Scalar {
    fn from(v: i64) -> Self {
        Scalar::Int(v)
    }
}
impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::Float(v)
    }
}
impl From<&str> for Scalar {
    fn from(v: &str) -> Self {
        Scalar::Str(v.to_owned())
    }
}
impl From<String> for Scalar {
    fn from(v: String) -> Self {
        Scalar::Str(v)
    }
}

pub type Metadata = BTreeMap<String, Scalar>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("empty label")]
    EmptyLabel,
    #[error("annotation {id} projects to [{start}, {end}) but the document has {len} characters")]
    OutOfBounds {
        id: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("segment text has {text} characters but its spans cover {spans}")]
    SpanLengthMismatch { text: usize, spans: usize },
    #[error("relation {0} links an annotation to itself")]
    SelfRelation(String),
    #[error("relation {relation} references unknown annotation {target}")]
    UnknownReference { relation: String, target: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub id: String,
    pub label: String,
    pub value: Scalar,
}

impl Attribute {
    pub fn new(label: impl Into<String>, value: impl Into<Scalar>) -> Self {
        Self {
            id: new_id(),
            label: label.into(),
            value: value.into(),
        }
    }
}

fn check_attributes(attributes: &[Attribute]) -> Result<(), ModelError> {
    let mut seen = HashSet::new();
    for a in attributes {
        if a.label.is_empty() {
            return Err(ModelError::EmptyLabel);
        }
        if !seen.insert(a.id.as_str()) {
            return Err(ModelError::DuplicateId(a.id.clone()));
        }
    }
    Ok(())
}

/// A labeled piece of text mapped back to the raw document by its spans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: String,
    pub label: String,
    pub text: String,
    pub spans: Vec<Span>,
    #[serde(default)]
    pub attributes: Vec<Attribute>,
    #[serde(default)]
    pub metadata: Metadata,
}

/// Entities are segments produced by recognizers; they usually carry
/// normalization attributes such as `norm_id`.
pub type Entity = Segment;

impl Segment {
    /// Build a segment with a fresh id, checking that the spans cover the text.
    pub fn new(
        label: impl Into<String>,
        text: impl Into<String>,
        spans: Vec<Span>,
    ) -> Result<Self, ModelError> {
        let seg = Self {
            id: new_id(),
            label: label.into(),
            text: text.into(),
            spans,
            attributes: Vec::new(),
            metadata: Metadata::new(),
        };
        seg.validate()?;
        Ok(seg)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.label.is_empty() {
            return Err(ModelError::EmptyLabel);
        }
        let text = self.text.chars().count();
        let spans = span::span_length(&self.spans);
        if text != spans {
            return Err(ModelError::SpanLengthMismatch { text, spans });
        }
        check_attributes(&self.attributes)
    }

    pub fn add_attribute(&mut self, attr: Attribute) -> Result<(), ModelError> {
        if attr.label.is_empty() {
            return Err(ModelError::EmptyLabel);
        }
        if self.attributes.iter().any(|a| a.id == attr.id) {
            return Err(ModelError::DuplicateId(attr.id));
        }
        self.attributes.push(attr);
        Ok(())
    }

    pub fn attribute(&self, label: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.label == label)
    }

    pub fn normalized_spans(&self) -> Vec<OriginalSpan> {
        span::normalize_spans(&self.spans)
    }

    pub fn has_modified_span(&self) -> bool {
        self.spans.iter().any(Span::is_modified)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub id: String,
    pub label: String,
    pub source_id: String,
    pub target_id: String,
    #[serde(default)]
    pub attributes: Vec<Attribute>,
    #[serde(default)]
    pub metadata: Metadata,
}

impl Relation {
    pub fn new(
        label: impl Into<String>,
        source_id: impl Into<String>,
        target_id: impl Into<String>,
    ) -> Self {
        Self {
            id: new_id(),
            label: label.into(),
            source_id: source_id.into(),
            target_id: target_id.into(),
            attributes: Vec::new(),
            metadata: Metadata::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Annotation {
    Segment(Segment),
    Entity(Entity),
    Relation(Relation),
}

impl Annotation {
    pub fn id(&self) -> &str {
        match self {
            Annotation::Segment(s) | Annotation::Entity(s) => &s.id,
            Annotation::Relation(r) => &r.id,
        }
    }

    pub fn label(&self) -> &str {
        match self {
            Annotation::Segment(s) | Annotation::Entity(s) => &s.label,
            Annotation::Relation(r) => &r.label,
        }
    }

    pub fn attributes(&self) -> &[Attribute] {
        match self {
            Annotation::Segment(s) | Annotation::Entity(s) => &s.attributes,
            Annotation::Relation(r) => &r.attributes,
        }
    }

    /// The segment behind a segment or entity annotation.
    pub fn as_segment(&self) -> Option<&Segment> {
        match self {
            Annotation::Segment(s) | Annotation::Entity(s) => Some(s),
            Annotation::Relation(_) => None,
        }
    }

    pub fn into_segment(self) -> Option<Segment> {
        match self {
            Annotation::Segment(s) | Annotation::Entity(s) => Some(s),
            Annotation::Relation(_) => None,
        }
    }

    pub fn is_entity(&self) -> bool {
        matches!(self, Annotation::Entity(_))
    }
}

/// Raw text plus the annotations attached to it.
///
/// The text cannot be changed once the document exists; transformations
/// produce new segments instead.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "DocumentRepr", into = "DocumentRepr")]
pub struct Document {
    id: String,
    text: String,
    char_len: usize,
    pub metadata: Metadata,
    annotations: Vec<Annotation>,
    index: HashMap<String, usize>,
}

impl PartialEq for Document {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.text == other.text
            && self.metadata == other.metadata
            && self.annotations == other.annotations
    }
}

#[derive(Serialize, Deserialize)]
struct DocumentRepr {
    id: String,
    text: String,
    #[serde(default)]
    metadata: Metadata,
    #[serde(default)]
    annotations: Vec<Annotation>,
}

impl TryFrom<DocumentRepr> for Document {
    type Error = ModelError;

    fn try_from(r: DocumentRepr) -> Result<Self, Self::Error> {
        let mut doc = Document::with_id(r.id, r.text, r.metadata);
        for ann in r.annotations {
            doc.attach(ann)?;
        }
        Ok(doc)
    }
}

impl From<Document> for DocumentRepr {
    fn from(d: Document) -> Self {
        DocumentRepr {
            id: d.id,
            text: d.text,
            metadata: d.metadata,
            annotations: d.annotations,
        }
    }
}

impl Document {
    pub fn new(text: impl Into<String>, metadata: Metadata) -> Self {
        Self::with_id(new_id(), text, metadata)
    }

    pub fn with_id(id: impl Into<String>, text: impl Into<String>, metadata: Metadata) -> Self {
        let text = text.into();
        Self {
            id: id.into(),
            char_len: text.chars().count(),
            text,
            metadata,
            annotations: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Length of the text in characters.
    pub fn len(&self) -> usize {
        self.char_len
    }

    pub fn is_empty(&self) -> bool {
        self.char_len == 0
    }

    /// The whole text as a segment labeled `raw`, sharing the document id.
    pub fn raw_segment(&self) -> Segment {
        let spans = if self.char_len == 0 {
            Vec::new()
        } else {
            vec![Span::original(0, self.char_len)]
        };
        Segment {
            id: self.id.clone(),
            label: "raw".into(),
            text: self.text.clone(),
            spans,
            attributes: Vec::new(),
            metadata: Metadata::new(),
        }
    }

    /// Concatenated raw text at the given original spans.
    pub fn slice(&self, spans: &[OriginalSpan], separator: &str) -> String {
        spans
            .iter()
            .map(|s| span::char_slice(&self.text, s.start, s.end))
            .collect::<Vec<_>>()
            .join(separator)
    }

    pub fn attach(&mut self, ann: Annotation) -> Result<&Annotation, ModelError> {
        let id = ann.id().to_owned();
        if self.index.contains_key(&id) || id == self.id {
            return Err(ModelError::DuplicateId(id));
        }
        if ann.label().is_empty() {
            return Err(ModelError::EmptyLabel);
        }
        match &ann {
            Annotation::Segment(s) | Annotation::Entity(s) => {
                s.validate()?;
                for n in s.normalized_spans() {
                    if n.end > self.char_len {
                        return Err(ModelError::OutOfBounds {
                            id,
                            start: n.start,
                            end: n.end,
                            len: self.char_len,
                        });
                    }
                }
            }
            Annotation::Relation(r) => {
                check_attributes(&r.attributes)?;
                if r.source_id == r.target_id {
                    return Err(ModelError::SelfRelation(id));
                }
                for target in [&r.source_id, &r.target_id] {
                    if !self.index.contains_key(target) {
                        return Err(ModelError::UnknownReference {
                            relation: id,
                            target: target.clone(),
                        });
                    }
                }
            }
        }
        self.index.insert(id, self.annotations.len());
        self.annotations.push(ann);
        Ok(self.annotations.last().expect("just pushed"))
    }

    pub fn get(&self, id: &str) -> Option<&Annotation> {
        self.index.get(id).map(|&i| &self.annotations[i])
    }

    /// Attached annotations in attachment order, optionally filtered by label.
    pub fn annotations(&self, label: Option<&str>) -> Vec<&Annotation> {
        self.annotations
            .iter()
            .filter(|a| label.is_none_or(|l| a.label() == l))
            .collect()
    }

    pub fn all_annotations(&self) -> &[Annotation] {
        &self.annotations
    }
}
