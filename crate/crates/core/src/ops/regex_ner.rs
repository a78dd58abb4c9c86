use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::{Entity, Segment};

use super::{sub_segment, CharOffsets, OpError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegexRule {
    pub pattern: String,
    pub label: String,
    /// Matches are dropped when this pattern occurs anywhere in the segment.
    #[serde(default)]
    pub exclusion_pattern: Option<String>,
    /// Only this capture group becomes the entity.
    #[serde(default)]
    pub group: Option<usize>,
}

impl RegexRule {
    pub fn new(pattern: &str, label: &str) -> Self {
        Self {
            pattern: pattern.into(),
            label: label.into(),
            exclusion_pattern: None,
            group: None,
        }
    }
}

#[derive(Debug, Clone)]
struct CompiledRule {
    re: Regex,
    exclusion: Option<Regex>,
    rule: RegexRule,
}

#[derive(Debug, Clone)]
pub struct RegexMatcher {
    rules: Vec<CompiledRule>,
}

impl RegexMatcher {
    pub fn new(rules: Vec<RegexRule>) -> Result<Self, OpError> {
        let compile = |p: &str| Regex::new(p).map_err(|e| OpError::InvalidRule(e.to_string()));
        let rules = rules
            .into_iter()
            .map(|rule| {
                if rule.label.is_empty() {
                    return Err(OpError::InvalidRule(format!("empty label for {:?}", rule.pattern)));
                }
                let re = compile(&rule.pattern)?;
                if rule.group.is_some_and(|g| g >= re.captures_len()) {
                    return Err(OpError::InvalidRule(format!(
                        "no group {:?} in {:?}",
                        rule.group, rule.pattern
                    )));
                }
                let exclusion = rule.exclusion_pattern.as_deref().map(compile).transpose()?;
                Ok(CompiledRule { re, exclusion, rule })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { rules })
    }

    /// One entity per non-empty match, rule by rule.
    pub fn apply(&self, seg: &Segment) -> Result<Vec<Entity>, OpError> {
        let offsets = CharOffsets::new(&seg.text);
        let mut out = Vec::new();
        for c in &self.rules {
            if c.exclusion.as_ref().is_some_and(|x| x.is_match(&seg.text)) {
                continue;
            }
            for caps in c.re.captures_iter(&seg.text) {
                let m = match c.rule.group {
                    Some(g) => caps.get(g),
                    None => caps.get(0),
                };
                let Some(m) = m.filter(|m| !m.is_empty()) else {
                    continue;
                };
                out.push(sub_segment(seg, offsets.range(m.range()), &c.rule.label)?);
            }
        }
        Ok(out)
    }
}

pub fn match_regex(seg: &Segment, rules: &[RegexRule]) -> Result<Vec<Entity>, OpError> {
    RegexMatcher::new(rules.to_vec())?.apply(seg)
}
