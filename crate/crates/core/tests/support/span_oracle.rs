//! Brute-force reference for the span engine.
//!
//! Every character of the working text carries a tag: the index of the raw
//! character it still is, or the set of raw indices a replacement stands for.
//! Operations are replayed on the tags one character at a time and the
//! result is compared with the span chain produced by the library.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::ops::Range;

use cliniflow::span::{self, OriginalSpan, Span};
use rand::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tag {
    Orig(usize),
    Replaced(BTreeSet<usize>),
}

#[derive(Debug, Clone)]
pub struct Tagged {
    pub chars: Vec<char>,
    pub tags: Vec<Tag>,
}

impl Tagged {
    pub fn raw(text: &str) -> Self {
        let chars: Vec<char> = text.chars().collect();
        let tags = (0..chars.len()).map(Tag::Orig).collect();
        Self { chars, tags }
    }

    pub fn text(&self) -> String {
        self.chars.iter().collect()
    }

    pub fn extract(&self, ranges: &[Range<usize>]) -> Self {
        let mut out = Self {
            chars: Vec::new(),
            tags: Vec::new(),
        };
        for r in ranges {
            out.chars.extend_from_slice(&self.chars[r.clone()]);
            out.tags.extend_from_slice(&self.tags[r.clone()]);
        }
        out
    }

    pub fn replace(&self, ranges: &[Range<usize>], reps: &[String]) -> Self {
        let mut out = Self {
            chars: Vec::new(),
            tags: Vec::new(),
        };
        let mut cursor = 0;
        for (r, rep) in ranges.iter().zip(reps) {
            out.chars.extend_from_slice(&self.chars[cursor..r.start]);
            out.tags.extend_from_slice(&self.tags[cursor..r.start]);
            let mut covered = BTreeSet::new();
            for t in &self.tags[r.clone()] {
                match t {
                    Tag::Orig(i) => {
                        covered.insert(*i);
                    }
                    Tag::Replaced(s) => covered.extend(s),
                }
            }
            for c in rep.chars() {
                out.chars.push(c);
                out.tags.push(Tag::Replaced(covered.clone()));
            }
            cursor = r.end;
        }
        out.chars.extend_from_slice(&self.chars[cursor..]);
        out.tags.extend_from_slice(&self.tags[cursor..]);
        out
    }

    pub fn concatenate(parts: &[Tagged], sep: &str) -> Self {
        let mut out = Self {
            chars: Vec::new(),
            tags: Vec::new(),
        };
        for (i, p) in parts.iter().enumerate() {
            if i > 0 {
                for c in sep.chars() {
                    out.chars.push(c);
                    out.tags.push(Tag::Replaced(BTreeSet::new()));
                }
            }
            out.chars.extend_from_slice(&p.chars);
            out.tags.extend_from_slice(&p.tags);
        }
        out
    }

    /// Every raw index referenced, regrouped into maximal runs.
    pub fn projection(&self) -> Vec<OriginalSpan> {
        let mut all = BTreeSet::new();
        for t in &self.tags {
            match t {
                Tag::Orig(i) => {
                    all.insert(*i);
                }
                Tag::Replaced(s) => all.extend(s),
            }
        }
        runs(&all)
    }
}

pub fn runs(indices: &BTreeSet<usize>) -> Vec<OriginalSpan> {
    let mut out: Vec<OriginalSpan> = Vec::new();
    for &i in indices {
        match out.last_mut() {
            Some(last) if last.end == i => last.end = i + 1,
            _ => out.push(OriginalSpan::new(i, i + 1)),
        }
    }
    out
}

/// Per-character tags implied by a span chain.
pub fn chain_tags(spans: &[Span]) -> Vec<Tag> {
    let mut out = Vec::new();
    for s in spans {
        match s {
            Span::Original(o) => out.extend((o.start..o.end).map(Tag::Orig)),
            Span::Modified(m) => {
                let set: BTreeSet<usize> = m.replaced.iter().flat_map(|r| r.start..r.end).collect();
                out.extend(std::iter::repeat_n(Tag::Replaced(set), m.length));
            }
        }
    }
    out
}

const POOL: &[&str] = &[
    "a", "b", "z", " ", "\n", "é", "e\u{301}", "ß", "中", "文", "👍", "👩\u{200d}⚕", "🇫🇷", ".", ",", "\u{a0}", "Ω",
];

pub fn random_text(rng: &mut impl Rng, max_chars: usize) -> String {
    let target = rng.gen_range(0..=max_chars);
    let mut s = String::new();
    let mut n = 0;
    while n < target {
        let piece = POOL[rng.gen_range(0..POOL.len())];
        let k = piece.chars().count();
        if n + k > max_chars {
            break;
        }
        s.push_str(piece);
        n += k;
    }
    s
}

/// Up to `max` sorted, disjoint (possibly empty) ranges inside `0..len`.
pub fn random_ranges(rng: &mut impl Rng, len: usize, max: usize) -> Vec<Range<usize>> {
    let k = rng.gen_range(0..=max);
    let mut points: Vec<usize> = (0..2 * k).map(|_| rng.gen_range(0..=len)).collect();
    points.sort_unstable();
    points.chunks(2).map(|p| p[0]..p[1]).collect()
}

#[derive(Debug, Clone)]
pub struct State {
    pub text: String,
    pub spans: Vec<Span>,
    pub oracle: Tagged,
}

impl State {
    pub fn raw(text: &str) -> Self {
        let n = text.chars().count();
        let spans = if n == 0 { Vec::new() } else { vec![Span::original(0, n)] };
        Self {
            text: text.to_string(),
            spans,
            oracle: Tagged::raw(text),
        }
    }

    fn len(&self) -> usize {
        self.oracle.chars.len()
    }

    /// Apply one random operation to both the library state and the oracle.
    pub fn step(&mut self, rng: &mut impl Rng) -> Result<&'static str, String> {
        let len = self.len();
        let op = rng.gen_range(0..5);
        let err = |e: span::SpanError| format!("unexpected error: {e}");
        let name = match op {
            0 => {
                let ranges = random_ranges(rng, len, 3);
                let (t, s) = span::extract(&self.text, &self.spans, &ranges).map_err(err)?;
                self.oracle = self.oracle.extract(&ranges);
                (self.text, self.spans) = (t, s);
                "extract"
            }
            1 => {
                let ranges = random_ranges(rng, len, 3);
                let reps: Vec<String> = ranges.iter().map(|_| random_text(rng, 4)).collect();
                let (t, s) = span::replace(&self.text, &self.spans, &ranges, &reps).map_err(err)?;
                self.oracle = self.oracle.replace(&ranges, &reps);
                (self.text, self.spans) = (t, s);
                "replace"
            }
            2 => {
                let ranges = random_ranges(rng, len, 3);
                let (t, s) = span::remove(&self.text, &self.spans, &ranges).map_err(err)?;
                let empties = vec![String::new(); ranges.len()];
                self.oracle = self.oracle.replace(&ranges, &empties);
                (self.text, self.spans) = (t, s);
                "remove"
            }
            3 => {
                let k = rng.gen_range(0..=3);
                let mut positions: Vec<usize> = (0..k).map(|_| rng.gen_range(0..=len)).collect();
                positions.sort_unstable();
                let inserts: Vec<String> = positions.iter().map(|_| random_text(rng, 3)).collect();
                let (t, s) = span::insert(&self.text, &self.spans, &positions, &inserts).map_err(err)?;
                let ranges: Vec<_> = positions.iter().map(|&p| p..p).collect();
                self.oracle = self.oracle.replace(&ranges, &inserts);
                (self.text, self.spans) = (t, s);
                "insert"
            }
            _ => {
                // join two pieces of the current text
                let pieces: Vec<Range<usize>> = (0..2)
                    .map(|_| {
                        let mut a = rng.gen_range(0..=len);
                        let mut b = rng.gen_range(0..=len);
                        if a > b {
                            std::mem::swap(&mut a, &mut b);
                        }
                        a..b
                    })
                    .collect();
                let mut lib_parts = Vec::new();
                let mut oracle_parts = Vec::new();
                for r in &pieces {
                    lib_parts.push(span::extract(&self.text, &self.spans, &[r.clone()]).map_err(err)?);
                    oracle_parts.push(self.oracle.extract(&[r.clone()]));
                }
                let sep = random_text(rng, 2);
                let refs: Vec<(&str, &[Span])> =
                    lib_parts.iter().map(|(t, s)| (t.as_str(), s.as_slice())).collect();
                let (t, s) = span::concatenate(&refs, &sep);
                self.oracle = Tagged::concatenate(&oracle_parts, &sep);
                (self.text, self.spans) = (t, s);
                "concatenate"
            }
        };
        self.check().map_err(|e| format!("after {name}: {e}"))?;
        Ok(name)
    }

    pub fn check(&self) -> Result<(), String> {
        let n = self.text.chars().count();
        if span::span_length(&self.spans) != n {
            return Err(format!(
                "span_length {} != text length {n}",
                span::span_length(&self.spans)
            ));
        }
        if self.text != self.oracle.text() {
            return Err(format!("text {:?} != oracle {:?}", self.text, self.oracle.text()));
        }
        if self.spans.iter().any(|s| s.is_empty()) {
            return Err("zero-length span in chain".into());
        }
        if chain_tags(&self.spans) != self.oracle.tags {
            return Err("per-character provenance differs from oracle".into());
        }
        let got = span::normalize_spans(&self.spans);
        let want = self.oracle.projection();
        if got != want {
            return Err(format!("normalize_spans {got:?} != oracle {want:?}"));
        }
        Ok(())
    }
}

/// One randomized sequence: a fresh text and up to `max_steps` operations.
pub fn run_sequence(rng: &mut impl Rng, max_text: usize, max_steps: usize) -> Result<usize, String> {
    let raw = random_text(rng, max_text);
    let mut st = State::raw(&raw);
    st.check()?;
    let steps = rng.gen_range(1..=max_steps);
    for i in 0..steps {
        st.step(rng).map_err(|e| format!("step {i} on {raw:?}: {e}"))?;
    }
    Ok(steps)
}
