use std::ops::Range;

use crate::model::Segment;

use super::{sub_segment, OpError};

pub const DEFAULT_PUNCT: &str = ".!?";

/// Split a segment into sentences.
///
/// A run of punctuation characters ends a sentence when it is followed by
/// whitespace or the end of the text (so `2.5` or `12.03.1980` stay whole);
/// line breaks always end a sentence. Pieces are trimmed, and pieces without
/// any letter or digit are dropped. Abbreviations such as `Dr.` are not
/// recognized.
pub fn split_sentences(
    seg: &Segment,
    punct_chars: &[char],
    keep_punct: bool,
) -> Result<Vec<Segment>, OpError> {
    let chars: Vec<char> = seg.text.chars().collect();
    let n = chars.len();
    let mut pieces: Vec<Range<usize>> = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < n {
        let c = chars[i];
        if c == '\n' || c == '\r' {
            pieces.push(start..i);
            start = i + 1;
            i += 1;
        } else if punct_chars.contains(&c) {
            let mut j = i;
            while j < n && punct_chars.contains(&chars[j]) {
                j += 1;
            }
            if j == n || chars[j].is_whitespace() {
                pieces.push(start..if keep_punct { j } else { i });
                start = j;
            }
            i = j;
        } else {
            i += 1;
        }
    }
    pieces.push(start..n);

    let mut sentences = Vec::new();
    for mut r in pieces {
        while r.start < r.end && chars[r.start].is_whitespace() {
            r.start += 1;
        }
        while r.end > r.start && chars[r.end - 1].is_whitespace() {
            r.end -= 1;
        }
        if chars[r.clone()].iter().any(|c| c.is_alphanumeric()) {
            sentences.push(sub_segment(seg, r, "sentence")?);
        }
    }
    Ok(sentences)
}
