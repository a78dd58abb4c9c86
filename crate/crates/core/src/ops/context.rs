//! Cue-based context detection (negation, hypothesis, family history).
//!
//! A cue before an entity applies when fewer than `max_token_window` whole
//! tokens separate the end of the cue from the entity and no terminator
//! lies between them. Cues after the entity work the same way in reverse.
//! Tokens are maximal runs of non-whitespace characters.

use std::ops::Range;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::model::{Attribute, Entity, Segment};
use crate::span::{self, OriginalSpan};

use super::{CharOffsets, OpError};

fn default_terminators() -> Vec<String> {
    [r"\bmais\b", r"\bcependant\b", ",", ";"].map(String::from).to_vec()
}

fn default_window() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRuleSet {
    pub attribute_label: String,
    #[serde(default)]
    pub cues_before: Vec<String>,
    #[serde(default)]
    pub cues_after: Vec<String>,
    #[serde(default = "default_terminators")]
    pub terminators: Vec<String>,
    #[serde(default = "default_window")]
    pub max_token_window: usize,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl ContextRuleSet {
    pub fn negation() -> Self {
        Self {
            attribute_label: "is_negated".into(),
            cues_before: strings(&[
                r"\bpas\b",
                r"\bsans\b",
                r"\baucune?\b",
                r"\babsence\s+d(?:e\b|e?s\b|u\b|')",
                r"\bni\b",
            ]),
            cues_after: Vec::new(),
            terminators: default_terminators(),
            max_token_window: default_window(),
        }
    }

    pub fn hypothesis() -> Self {
        Self {
            attribute_label: "is_hypothesis".into(),
            cues_before: strings(&[
                r"\bsi\b",
                r"\béventuel(?:le)?s?\b",
                r"\bpossibles?\b",
                r"\bsuspicion\s+d(?:e\b|')",
            ]),
            cues_after: strings(&[r"\béventuel(?:le)?s?\b", r"\bpossibles?\b"]),
            terminators: default_terminators(),
            max_token_window: default_window(),
        }
    }

    pub fn antecedent() -> Self {
        Self {
            attribute_label: "is_family".into(),
            cues_before: strings(&[
                r"\bantécédents?\b",
                r"\bATCD\b",
                r"\bfamili(?:al|ale|aux|ales)\b",
                r"\bmère\b",
                r"\bpère\b",
            ]),
            cues_after: strings(&[r"\bfamili(?:al|ale|aux|ales)\b"]),
            terminators: default_terminators(),
            max_token_window: default_window(),
        }
    }

    /// Built-in French rule set by name: `negation`, `hypothesis` or `antecedent`.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "negation" => Some(Self::negation()),
            "hypothesis" => Some(Self::hypothesis()),
            "antecedent" => Some(Self::antecedent()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContextDetector {
    label: String,
    before: Vec<Regex>,
    after: Vec<Regex>,
    terminators: Vec<Regex>,
    window: usize,
}

fn compile_all(patterns: &[String]) -> Result<Vec<Regex>, OpError> {
    patterns
        .iter()
        .map(|p| {
            RegexBuilder::new(p)
                .case_insensitive(true)
                .build()
                .map_err(|e| OpError::InvalidRule(e.to_string()))
        })
        .collect()
}

fn char_matches(res: &[Regex], text: &str, offsets: &CharOffsets) -> Vec<Range<usize>> {
    res.iter()
        .flat_map(|re| re.find_iter(text))
        .filter(|m| !m.is_empty())
        .map(|m| offsets.range(m.range()))
        .collect()
}

impl ContextDetector {
    pub fn new(rules: &ContextRuleSet) -> Result<Self, OpError> {
        if rules.attribute_label.is_empty() {
            return Err(OpError::InvalidRule("empty attribute label".into()));
        }
        if rules.cues_before.is_empty() && rules.cues_after.is_empty() {
            return Err(OpError::InvalidRule(format!(
                "no cues for {:?}",
                rules.attribute_label
            )));
        }
        if rules.max_token_window == 0 {
            return Err(OpError::InvalidRule("max_token_window must be positive".into()));
        }
        Ok(Self {
            label: rules.attribute_label.clone(),
            before: compile_all(&rules.cues_before)?,
            after: compile_all(&rules.cues_after)?,
            terminators: compile_all(&rules.terminators)?,
            window: rules.max_token_window,
        })
    }

    pub fn attribute_label(&self) -> &str {
        &self.label
    }

    /// One attribute per entity, in entity order.
    pub fn apply(
        &self,
        sentence: &Segment,
        entities: &[Entity],
    ) -> Result<Vec<(String, Attribute)>, OpError> {
        let chars: Vec<char> = sentence.text.chars().collect();
        let offsets = CharOffsets::new(&sentence.text);
        let before = char_matches(&self.before, &sentence.text, &offsets);
        let after = char_matches(&self.after, &sentence.text, &offsets);
        let terms = char_matches(&self.terminators, &sentence.text, &offsets);
        let sentence_cover = sentence.normalized_spans();

        let tokens = tokenize(&chars);
        let tokens_within = |gap: &Range<usize>| {
            tokens
                .iter()
                .filter(|t| t.start >= gap.start && t.end <= gap.end)
                .count()
        };
        let blocked = |gap: &Range<usize>| {
            terms
                .iter()
                .any(|t| t.start >= gap.start && t.end <= gap.end)
        };
        let applies = |gap: Range<usize>| tokens_within(&gap) < self.window && !blocked(&gap);

        let mut out = Vec::with_capacity(entities.len());
        for ent in entities {
            let pos = locate_entity(sentence, &sentence_cover, ent)?;
            let hit = before
                .iter()
                .any(|c| c.end <= pos.start && applies(c.end..pos.start))
                || after
                    .iter()
                    .any(|c| c.start >= pos.end && applies(pos.end..c.start));
            out.push((ent.id.clone(), Attribute::new(self.label.as_str(), hit)));
        }
        Ok(out)
    }
}

fn tokenize(chars: &[char]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let s = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        out.push(s..i);
    }
    out
}

fn locate_entity(
    sentence: &Segment,
    cover: &[OriginalSpan],
    ent: &Entity,
) -> Result<Range<usize>, OpError> {
    let scope_err = || OpError::Scope {
        entity: ent.id.clone(),
        sentence: sentence.id.clone(),
    };
    let target = ent.normalized_spans();
    let inside = target
        .iter()
        .all(|t| cover.iter().any(|c| c.start <= t.start && t.end <= c.end));
    if target.is_empty() || !inside {
        return Err(scope_err());
    }
    span::locate(&sentence.spans, &target).ok_or_else(scope_err)
}

/// Detect one context for every entity of a sentence.
pub fn detect_context(
    sentence: &Segment,
    entities: &[Entity],
    rules: &ContextRuleSet,
) -> Result<Vec<(String, Attribute)>, OpError> {
    ContextDetector::new(rules)?.apply(sentence, entities)
}
