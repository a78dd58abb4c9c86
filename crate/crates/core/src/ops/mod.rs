//! Rule-based text operations: sentence splitting, de-identification,
//! dictionary, regex and date recognition, and context detection.
//!
//! Every operation works on a [`Segment`] and builds its outputs through the
//! span engine, so results always map back to the raw document.

pub mod context;
pub mod dates;
pub mod deid;
pub mod dictionary;
pub mod fold;
pub mod regex_ner;
pub mod sentences;

use std::ops::Range;

use thiserror::Error;

use crate::io::ConvertError;
use crate::model::{ModelError, Segment};
use crate::span::{self, SpanError};

pub use context::{detect_context, ContextDetector, ContextRuleSet};
pub use dates::{match_dates, DateMatcher};
pub use deid::{deidentify, DeidRule, Deidentifier};
pub use dictionary::{load_dictionary, match_dictionary, parse_dictionary, DictionaryEntry, DictionaryMatcher};
pub use regex_ner::{match_regex, RegexMatcher, RegexRule};
pub use sentences::split_sentences;

#[derive(Debug, Error)]
pub enum OpError {
    #[error(transparent)]
    Span(#[from] SpanError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Convert(#[from] ConvertError),
    #[error("invalid rule: {0}")]
    InvalidRule(String),
    #[error("entity {entity} lies outside sentence {sentence}")]
    Scope { entity: String, sentence: String },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("{0}")]
    Other(String),
}

/// Converts byte offsets produced by `regex` into character offsets.
pub(crate) struct CharOffsets {
    starts: Vec<usize>,
}

impl CharOffsets {
    pub(crate) fn new(text: &str) -> Self {
        let mut starts: Vec<usize> = text.char_indices().map(|(i, _)| i).collect();
        starts.push(text.len());
        Self { starts }
    }

    /// Character index of a byte offset lying on a char boundary.
    pub(crate) fn char_at(&self, byte: usize) -> usize {
        self.starts
            .binary_search(&byte)
            .expect("byte offset on a char boundary")
    }

    pub(crate) fn range(&self, bytes: Range<usize>) -> Range<usize> {
        self.char_at(bytes.start)..self.char_at(bytes.end)
    }
}

/// A new segment covering `range` of `seg`, with the chain sliced alongside.
pub(crate) fn sub_segment(
    seg: &Segment,
    range: Range<usize>,
    label: &str,
) -> Result<Segment, OpError> {
    let (text, spans) = span::extract(&seg.text, &seg.spans, &[range])?;
    Ok(Segment::new(label, text, spans)?)
}

/// Greedy leftmost-longest selection of non-overlapping candidates.
///
/// Candidates are `(range, priority)`; among equal ranges the lowest
/// priority wins. Empty ranges are dropped.
pub(crate) fn leftmost_longest<T: Ord + Copy>(mut cands: Vec<(Range<usize>, T)>) -> Vec<(Range<usize>, T)> {
    cands.retain(|(r, _)| r.start < r.end);
    cands.sort_by(|(a, pa), (b, pb)| {
        a.start
            .cmp(&b.start)
            .then(b.end.cmp(&a.end))
            .then(pa.cmp(pb))
    });
    let mut out: Vec<(Range<usize>, T)> = Vec::new();
    for (r, p) in cands {
        if out.last().is_none_or(|(last, _)| r.start >= last.end) {
            out.push((r, p));
        }
    }
    out
}
