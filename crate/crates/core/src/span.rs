//! Non-destructive text transformation.
//!
//! Every piece of derived text carries a span chain: an ordered list of
//! [`Span`]s whose lengths add up to the text length. An [`OriginalSpan`]
//! says "these characters are copied verbatim from the raw document at
//! `[start, end)`". A [`ModifiedSpan`] says "these `length` characters were
//! written by an operation and stand for the original ranges in `replaced`".
//!
//! All offsets are counted in Unicode scalar values, and every interval is
//! half-open. Operations take `(text, chain)` pairs and return new pairs;
//! nothing is mutated in place.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A range of characters copied verbatim from the raw document text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OriginalSpan {
    #[serde(rename = "s")]
    pub start: usize,
    #[serde(rename = "e")]
    pub end: usize,
}

impl OriginalSpan {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end, "span start {start} > end {end}");
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

impl From<Range<usize>> for OriginalSpan {
    fn from(r: Range<usize>) -> Self {
        Self::new(r.start, r.end)
    }
}

/// Text written by an operation, standing for the listed original ranges.
///
/// `replaced` is empty for pure insertions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModifiedSpan {
    #[serde(rename = "len")]
    pub length: usize,
    pub replaced: Vec<OriginalSpan>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Span {
    Original(OriginalSpan),
    Modified(ModifiedSpan),
}

impl Span {
    pub fn original(start: usize, end: usize) -> Self {
        Span::Original(OriginalSpan::new(start, end))
    }

    pub fn modified(length: usize, replaced: Vec<OriginalSpan>) -> Self {
        Span::Modified(ModifiedSpan { length, replaced })
    }

    /// Number of characters of annotated text this span accounts for.
    pub fn len(&self) -> usize {
        match self {
            Span::Original(o) => o.len(),
            Span::Modified(m) => m.length,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_modified(&self) -> bool {
        matches!(self, Span::Modified(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpanError {
    #[error("invalid range #{index} [{start}, {end}): {reason}")]
    InvalidRange {
        index: usize,
        start: usize,
        end: usize,
        reason: &'static str,
    },
    #[error("{ranges} ranges but {replacements} replacement texts")]
    ArityMismatch { ranges: usize, replacements: usize },
    #[error("span chain covers {chain} characters but text has {text}")]
    LengthMismatch { chain: usize, text: usize },
}

/// Sum of the lengths of all spans in the chain.
pub fn span_length(spans: &[Span]) -> usize {
    spans.iter().map(Span::len).sum()
}

/// Byte offsets of every character boundary of `text`, including the end.
fn char_boundaries(text: &str) -> Vec<usize> {
    text.char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect()
}

/// Slice `text` by character offsets. Panics if the offsets exceed the text.
pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let mut it = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
    let s = it.by_ref().nth(start).expect("start offset out of bounds");
    if end == start {
        return &text[s..s];
    }
    let e = it.nth(end - start - 1).expect("end offset out of bounds");
    &text[s..e]
}

fn check_chain(text_len: usize, spans: &[Span]) -> Result<(), SpanError> {
    let chain = span_length(spans);
    if chain != text_len {
        return Err(SpanError::LengthMismatch {
            chain,
            text: text_len,
        });
    }
    Ok(())
}

fn validate_ranges(ranges: &[Range<usize>], len: usize) -> Result<(), SpanError> {
    let mut prev_end = 0;
    for (index, r) in ranges.iter().enumerate() {
        let err = |reason| SpanError::InvalidRange {
            index,
            start: r.start,
            end: r.end,
            reason,
        };
        if r.start > r.end {
            return Err(err("start after end"));
        }
        if r.end > len {
            return Err(err("out of bounds"));
        }
        if r.start < prev_end {
            return Err(err("unsorted or overlapping"));
        }
        prev_end = r.end;
    }
    Ok(())
}

/// Append to `out` the portion of `spans` covering text positions `[start, end)`.
fn push_slice(spans: &[Span], start: usize, end: usize, out: &mut Vec<Span>) {
    let mut offset = 0;
    for span in spans {
        let (s, e) = (offset, offset + span.len());
        offset = e;
        if e <= start {
            continue;
        }
        if s >= end {
            break;
        }
        let lo = start.max(s) - s;
        let hi = end.min(e) - s;
        if lo == hi {
            continue;
        }
        match span {
            Span::Original(o) => out.push(Span::original(o.start + lo, o.start + hi)),
            // a replacement cannot be subdivided, so every slice keeps the full list
            Span::Modified(m) => out.push(Span::modified(hi - lo, m.replaced.clone())),
        }
    }
}

/// Original ranges referenced by the text positions `[start, end)`.
fn covered_originals(spans: &[Span], start: usize, end: usize) -> Vec<OriginalSpan> {
    let mut sliced = Vec::new();
    push_slice(spans, start, end, &mut sliced);
    let mut replaced = Vec::new();
    for span in sliced {
        match span {
            Span::Original(o) => replaced.push(o),
            Span::Modified(m) => replaced.extend(m.replaced),
        }
    }
    replaced
}

/// Keep only the given character ranges of `text`, slicing the chain alongside.
pub fn extract(
    text: &str,
    spans: &[Span],
    ranges: &[Range<usize>],
) -> Result<(String, Vec<Span>), SpanError> {
    let bounds = char_boundaries(text);
    let len = bounds.len() - 1;
    check_chain(len, spans)?;
    validate_ranges(ranges, len)?;

    let mut out_text = String::new();
    let mut out_spans = Vec::new();
    for r in ranges {
        out_text.push_str(&text[bounds[r.start]..bounds[r.end]]);
        push_slice(spans, r.start, r.end, &mut out_spans);
    }
    Ok((out_text, out_spans))
}

/// Substitute each range with the matching replacement text.
///
/// The replaced portion becomes a [`ModifiedSpan`] pointing at every original
/// range the covered characters referenced.
pub fn replace<S: AsRef<str>>(
    text: &str,
    spans: &[Span],
    ranges: &[Range<usize>],
    replacements: &[S],
) -> Result<(String, Vec<Span>), SpanError> {
    if ranges.len() != replacements.len() {
        return Err(SpanError::ArityMismatch {
            ranges: ranges.len(),
            replacements: replacements.len(),
        });
    }
    let bounds = char_boundaries(text);
    let len = bounds.len() - 1;
    check_chain(len, spans)?;
    validate_ranges(ranges, len)?;

    let mut out_text = String::with_capacity(text.len());
    let mut out_spans = Vec::with_capacity(spans.len() + ranges.len());
    let mut cursor = 0;
    for (r, rep) in ranges.iter().zip(replacements) {
        let rep = rep.as_ref();
        out_text.push_str(&text[bounds[cursor]..bounds[r.start]]);
        push_slice(spans, cursor, r.start, &mut out_spans);

        let rep_len = rep.chars().count();
        if rep_len > 0 {
            out_spans.push(Span::modified(
                rep_len,
                covered_originals(spans, r.start, r.end),
            ));
            out_text.push_str(rep);
        }
        cursor = r.end;
    }
    out_text.push_str(&text[bounds[cursor]..]);
    push_slice(spans, cursor, len, &mut out_spans);
    Ok((out_text, out_spans))
}

/// Delete the given ranges. Removal leaves no node in the chain.
pub fn remove(
    text: &str,
    spans: &[Span],
    ranges: &[Range<usize>],
) -> Result<(String, Vec<Span>), SpanError> {
    let empties = vec![""; ranges.len()];
    replace(text, spans, ranges, &empties)
}

/// Insert texts at the given positions; inserted text maps to no original range.
pub fn insert<S: AsRef<str>>(
    text: &str,
    spans: &[Span],
    positions: &[usize],
    inserts: &[S],
) -> Result<(String, Vec<Span>), SpanError> {
    let ranges: Vec<_> = positions.iter().map(|&p| p..p).collect();
    replace(text, spans, &ranges, inserts)
}

/// Join several `(text, chain)` parts with `separator`.
pub fn concatenate(parts: &[(&str, &[Span])], separator: &str) -> (String, Vec<Span>) {
    let sep_len = separator.chars().count();
    let mut text = String::new();
    let mut spans = Vec::new();
    for (i, (t, s)) in parts.iter().enumerate() {
        if i > 0 {
            text.push_str(separator);
            if sep_len > 0 {
                spans.push(Span::modified(sep_len, Vec::new()));
            }
        }
        text.push_str(t);
        spans.extend(s.iter().filter(|s| !s.is_empty()).cloned());
    }
    (text, spans)
}

/// Project a chain onto the raw document.
///
/// Returns the original ranges referenced by the chain, sorted and with
/// overlapping or touching ranges merged. Pure insertions contribute nothing.
pub fn normalize_spans(spans: &[Span]) -> Vec<OriginalSpan> {
    let mut all: Vec<OriginalSpan> = Vec::new();
    for span in spans {
        match span {
            Span::Original(o) => all.push(*o),
            Span::Modified(m) => all.extend(m.replaced.iter().copied()),
        }
    }
    merge_spans(all)
}

/// Sort and merge overlapping or adjacent ranges, dropping empty ones.
pub fn merge_spans(mut spans: Vec<OriginalSpan>) -> Vec<OriginalSpan> {
    spans.retain(|s| !s.is_empty());
    spans.sort_unstable();
    let mut merged: Vec<OriginalSpan> = Vec::with_capacity(spans.len());
    for s in spans {
        match merged.last_mut() {
            Some(last) if s.start <= last.end => last.end = last.end.max(s.end),
            _ => merged.push(s),
        }
    }
    merged
}

/// Text positions in this chain whose characters reference any of `targets`.
///
/// Returns the smallest range covering them, or `None` when nothing in the
/// chain points at the targets. Modified spans are matched as a whole.
pub fn locate(spans: &[Span], targets: &[OriginalSpan]) -> Option<Range<usize>> {
    let mut found: Option<Range<usize>> = None;
    let mut widen = |r: Range<usize>| {
        found = Some(match found.take() {
            None => r,
            Some(f) => f.start.min(r.start)..f.end.max(r.end),
        });
    };
    let mut offset = 0;
    for span in spans {
        let (s, e) = (offset, offset + span.len());
        offset = e;
        match span {
            Span::Original(o) => {
                for t in targets {
                    let lo = o.start.max(t.start);
                    let hi = o.end.min(t.end);
                    if lo < hi {
                        widen(s + (lo - o.start)..s + (hi - o.start));
                    }
                }
            }
            Span::Modified(m) => {
                let hit = m
                    .replaced
                    .iter()
                    .any(|r| targets.iter().any(|t| r.start.max(t.start) < r.end.min(t.end)));
                if hit && s < e {
                    widen(s..e);
                }
            }
        }
    }
    found
}
