use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::{Entity, Segment};
use crate::span;

use super::{leftmost_longest, sub_segment, CharOffsets, OpError};

/// Text matched by `pattern` is replaced by `placeholder`. When `group` is
/// set only that capture group is replaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeidRule {
    pub pattern: String,
    pub placeholder: String,
    #[serde(default)]
    pub group: Option<usize>,
}

impl DeidRule {
    pub fn new(pattern: &str, placeholder: &str) -> Self {
        Self {
            pattern: pattern.into(),
            placeholder: placeholder.into(),
            group: None,
        }
    }

    /// Entity label for matches: the placeholder without its brackets.
    pub fn label(&self) -> &str {
        self.placeholder
            .trim_start_matches(['[', '<'])
            .trim_end_matches([']', '>'])
    }

    /// Rules for French clinical notes: dates, phone numbers, e-mail
    /// addresses and names introduced by a title.
    pub fn french_defaults() -> Vec<DeidRule> {
        vec![
            DeidRule::new(r"\b\d{1,2}[/.-]\d{1,2}[/.-]\d{2,4}\b", "[DATE]"),
            DeidRule::new(
                r"(?i)\b(?:\d{1,2}|1er)\s+(?:janvier|f[ée]vrier|mars|avril|mai|juin|juillet|ao[ûu]t|septembre|octobre|novembre|d[ée]cembre)\s+\d{4}\b",
                "[DATE]",
            ),
            DeidRule::new(r"\b0\d(?:[ .-]?\d{2}){4}\b", "[PHONE]"),
            DeidRule::new(r"\b[\w.+-]+@[\w-]+(?:\.[\w-]+)+\b", "[EMAIL]"),
            DeidRule {
                pattern: r"\b(?:M\.|Mme|Mlle|Dr|Docteur|Pr)\s+(\p{Lu}[\p{L}'-]+)".into(),
                placeholder: "[NAME]".into(),
                group: Some(1),
            },
        ]
    }
}

#[derive(Debug, Clone)]
pub struct Deidentifier {
    rules: Vec<(Regex, DeidRule)>,
}

impl Deidentifier {
    pub fn new(rules: Vec<DeidRule>) -> Result<Self, OpError> {
        let rules = rules
            .into_iter()
            .map(|r| {
                if r.placeholder.is_empty() {
                    return Err(OpError::InvalidRule(format!("empty placeholder for {:?}", r.pattern)));
                }
                let re = Regex::new(&r.pattern).map_err(|e| OpError::InvalidRule(e.to_string()))?;
                if r.group.is_some_and(|g| g >= re.captures_len()) {
                    return Err(OpError::InvalidRule(format!("no group {:?} in {:?}", r.group, r.pattern)));
                }
                Ok((re, r))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { rules })
    }

    /// Replace every match by its placeholder.
    ///
    /// Returns the de-identified segment, whose chain records the original
    /// PHI ranges behind each placeholder, and one entity per match spanning
    /// the original matched text. Overlapping matches are resolved leftmost
    /// longest, earlier rules first on ties.
    pub fn apply(&self, seg: &Segment) -> Result<(Segment, Vec<Entity>), OpError> {
        let offsets = CharOffsets::new(&seg.text);
        let mut cands = Vec::new();
        for (rule_idx, (re, rule)) in self.rules.iter().enumerate() {
            for caps in re.captures_iter(&seg.text) {
                let m = match rule.group {
                    Some(g) => caps.get(g),
                    None => caps.get(0),
                };
                if let Some(m) = m {
                    cands.push((offsets.range(m.range()), rule_idx));
                }
            }
        }
        let picked = leftmost_longest(cands);

        let mut entities = Vec::with_capacity(picked.len());
        for (r, idx) in &picked {
            entities.push(sub_segment(seg, r.clone(), self.rules[*idx].1.label())?);
        }
        let ranges: Vec<_> = picked.iter().map(|(r, _)| r.clone()).collect();
        let placeholders: Vec<&str> = picked
            .iter()
            .map(|(_, i)| self.rules[*i].1.placeholder.as_str())
            .collect();
        let (text, spans) = span::replace(&seg.text, &seg.spans, &ranges, &placeholders)?;
        let out = Segment::new(seg.label.clone(), text, spans)?;
        Ok((out, entities))
    }
}

pub fn deidentify(seg: &Segment, rules: &[DeidRule]) -> Result<(Segment, Vec<Entity>), OpError> {
    Deidentifier::new(rules.to_vec())?.apply(seg)
}
