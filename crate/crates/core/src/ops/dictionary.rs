//! Dictionary-based entity recognition.
//!
//! Terms are matched on word boundaries (the characters around a match must
//! not be letters or digits). Among overlapping matches the leftmost one
//! wins, then the longest, then the earliest dictionary entry.

use std::collections::HashMap;
use std::path::Path;

use aho_corasick::AhoCorasick;
use serde::{Deserialize, Serialize};

use crate::io::text::read_utf8;
use crate::model::{Attribute, Entity, Segment};

use super::fold::{fold, Folded};
use super::{leftmost_longest, sub_segment, OpError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryEntry {
    pub term: String,
    pub label: String,
    #[serde(default)]
    pub norm_id: Option<String>,
    #[serde(default)]
    pub case_sensitive: bool,
}

impl DictionaryEntry {
    pub fn new(term: &str, label: &str, norm_id: Option<&str>) -> Self {
        Self {
            term: term.into(),
            label: label.into(),
            norm_id: norm_id.map(str::to_owned),
            case_sensitive: false,
        }
    }
}

/// Parse a `term,label,norm_id` file. `#` starts a comment line; the
/// `norm_id` column is optional. Fields may be quoted.
pub fn parse_dictionary(text: &str) -> Result<Vec<DictionaryEntry>, OpError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut entries = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| OpError::InvalidParams(format!("dictionary: {e}")))?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        let field = |k: usize| rec.get(k).filter(|s| !s.is_empty());
        let (Some(term), Some(label)) = (field(0), field(1)) else {
            if rec.iter().all(str::is_empty) {
                continue;
            }
            return Err(OpError::InvalidParams(format!(
                "dictionary line {line}: expected term,label[,norm_id]"
            )));
        };
        if rec.len() > 3 {
            return Err(OpError::InvalidParams(format!(
                "dictionary line {line}: too many columns"
            )));
        }
        entries.push(DictionaryEntry::new(term, label, field(2)));
    }
    Ok(entries)
}

pub fn load_dictionary(path: &Path) -> Result<Vec<DictionaryEntry>, OpError> {
    parse_dictionary(&read_utf8(path)?)
}

#[derive(Debug, Clone)]
struct Automaton {
    ac: AhoCorasick,
    /// dictionary entry behind each pattern
    entries: Vec<usize>,
    lowercase: bool,
}

/// A compiled dictionary, shareable across threads.
#[derive(Debug, Clone)]
pub struct DictionaryMatcher {
    entries: Vec<DictionaryEntry>,
    strip_accents: bool,
    automata: Vec<Automaton>,
}

impl DictionaryMatcher {
    pub fn new(entries: Vec<DictionaryEntry>, strip_accents: bool) -> Result<Self, OpError> {
        let mut automata = Vec::new();
        for lowercase in [true, false] {
            let mut seen: HashMap<String, usize> = HashMap::new();
            let mut patterns = Vec::new();
            let mut owners = Vec::new();
            for (i, e) in entries.iter().enumerate() {
                if e.term.is_empty() {
                    return Err(OpError::InvalidRule(format!("empty term for label {:?}", e.label)));
                }
                if e.case_sensitive == lowercase {
                    continue;
                }
                let folded = fold(&e.term, lowercase, strip_accents);
                if folded.is_empty() || seen.contains_key(&folded) {
                    continue;
                }
                seen.insert(folded.clone(), i);
                patterns.push(folded);
                owners.push(i);
            }
            if patterns.is_empty() {
                continue;
            }
            let ac = AhoCorasick::new(&patterns).map_err(|e| OpError::InvalidRule(e.to_string()))?;
            automata.push(Automaton {
                ac,
                entries: owners,
                lowercase,
            });
        }
        Ok(Self {
            entries,
            strip_accents,
            automata,
        })
    }

    pub fn entries(&self) -> &[DictionaryEntry] {
        &self.entries
    }

    /// Character ranges and entry indices of the selected matches in `text`.
    pub fn find(&self, text: &str) -> Vec<(std::ops::Range<usize>, usize)> {
        let chars: Vec<char> = text.chars().collect();
        let boundary_ok = |r: &std::ops::Range<usize>| {
            (r.start == 0 || !chars[r.start - 1].is_alphanumeric())
                && (r.end == chars.len() || !chars[r.end].is_alphanumeric())
        };
        let mut cands = Vec::new();
        for auto in &self.automata {
            let folded = Folded::new(text, auto.lowercase, self.strip_accents);
            for m in auto.ac.find_overlapping_iter(&folded.text) {
                let r = folded.source_range(m.start(), m.end());
                if boundary_ok(&r) {
                    cands.push((r, auto.entries[m.pattern().as_usize()]));
                }
            }
        }
        leftmost_longest(cands)
    }

    pub fn apply(&self, seg: &Segment) -> Result<Vec<Entity>, OpError> {
        self.find(&seg.text)
            .into_iter()
            .map(|(r, idx)| {
                let entry = &self.entries[idx];
                let mut ent = sub_segment(seg, r, &entry.label)?;
                if let Some(norm) = &entry.norm_id {
                    ent.add_attribute(Attribute::new("norm_id", norm.as_str()))?;
                }
                Ok(ent)
            })
            .collect()
    }
}

pub fn match_dictionary(
    seg: &Segment,
    dict: &[DictionaryEntry],
    strip_accents: bool,
) -> Result<Vec<Entity>, OpError> {
    DictionaryMatcher::new(dict.to_vec(), strip_accents)?.apply(seg)
}
