//! Case and accent folding that remembers where each folded character came from.

use unicode_normalization::char::{decompose_canonical, is_combining_mark};

/// Folded text plus, for every folded character, the index of the source
/// character it was produced from.
#[derive(Debug, Clone, PartialEq)]
pub struct Folded {
    pub text: String,
    pub source: Vec<usize>,
    byte_starts: Vec<usize>,
    source_len: usize,
}

impl Folded {
    /// Fold each character independently: canonical decomposition with
    /// combining marks removed (when `strip_accents`), then lowercasing
    /// (when `lowercase`). A character may fold to zero or several chars.
    pub fn new(text: &str, lowercase: bool, strip_accents: bool) -> Self {
        let mut out = String::with_capacity(text.len());
        let mut source = Vec::with_capacity(text.len());
        let mut byte_starts = Vec::with_capacity(text.len() + 1);
        let mut push = |c: char, i: usize, out: &mut String| {
            if lowercase {
                for l in c.to_lowercase() {
                    byte_starts.push(out.len());
                    out.push(l);
                    source.push(i);
                }
            } else {
                byte_starts.push(out.len());
                out.push(c);
                source.push(i);
            }
        };
        let mut source_len = 0;
        for (i, c) in text.chars().enumerate() {
            source_len = i + 1;
            if strip_accents {
                let mut parts = Vec::with_capacity(2);
                decompose_canonical(c, |d| parts.push(d));
                for d in parts.into_iter().filter(|d| !is_combining_mark(*d)) {
                    push(d, i, &mut out);
                }
            } else {
                push(c, i, &mut out);
            }
        }
        byte_starts.push(out.len());
        Self {
            text: out,
            source,
            byte_starts,
            source_len,
        }
    }

    /// Source character range of a folded byte range (non-empty, on char
    /// boundaries). Source characters that folded to nothing right after the
    /// range, such as combining accents, are included.
    pub fn source_range(&self, start_byte: usize, end_byte: usize) -> std::ops::Range<usize> {
        let fs = self.byte_starts.binary_search(&start_byte).expect("char boundary");
        let fe = self.byte_starts.binary_search(&end_byte).expect("char boundary");
        let last = self.source[fe - 1];
        let end = match self.source.get(fe) {
            Some(&next) if next > last => next,
            Some(_) => last + 1,
            None => self.source_len,
        };
        self.source[fs]..end
    }
}

/// Fold a whole string without keeping the index map.
pub fn fold(text: &str, lowercase: bool, strip_accents: bool) -> String {
    Folded::new(text, lowercase, strip_accents).text
}
