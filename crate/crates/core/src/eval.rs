//! Entity-level comparison of predicted and reference annotations.
//!
//! Entities are compared through their projection onto the raw document, so
//! predictions made on transformed text are scored at their original
//! position.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Entity;
use crate::span::OriginalSpan;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("IoU threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    Exact,
    Overlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchSpec {
    pub mode: MatchMode,
    /// Minimum IoU for a match in overlap mode.
    pub iou_threshold: f64,
    pub label_sensitive: bool,
}

impl MatchSpec {
    pub fn exact() -> Self {
        Self {
            mode: MatchMode::Exact,
            iou_threshold: 1.0,
            label_sensitive: true,
        }
    }

    pub fn overlap(iou_threshold: f64) -> Result<Self, EvalError> {
        let spec = Self {
            mode: MatchMode::Overlap,
            iou_threshold,
            label_sensitive: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn label_sensitive(mut self, yes: bool) -> Self {
        self.label_sensitive = yes;
        self
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.iou_threshold > 0.0 && self.iou_threshold <= 1.0 {
            Ok(())
        } else {
            Err(EvalError::InvalidThreshold(self.iou_threshold))
        }
    }
}

impl Default for MatchSpec {
    fn default() -> Self {
        Self::exact()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityRef {
    pub id: String,
    pub label: String,
}

impl EntityRef {
    fn of(e: &Entity) -> Self {
        Self {
            id: e.id.clone(),
            label: e.label.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub pred: EntityRef,
    pub reference: EntityRef,
    pub iou: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub matches: Vec<MatchedPair>,
    pub unmatched_pred: Vec<EntityRef>,
    pub unmatched_ref: Vec<EntityRef>,
}

fn total(spans: &[OriginalSpan]) -> usize {
    spans.iter().map(OriginalSpan::len).sum()
}

/// Size of the intersection of two merged, sorted span lists.
fn intersection(a: &[OriginalSpan], b: &[OriginalSpan]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        let lo = a[i].start.max(b[j].start);
        let hi = a[i].end.min(b[j].end);
        n += hi.saturating_sub(lo);
        if a[i].end < b[j].end {
            i += 1;
        } else {
            j += 1;
        }
    }
    n
}

struct Candidate {
    pred: usize,
    reference: usize,
    // IoU kept as a fraction so that ties are exact
    inter: usize,
    union: usize,
}

fn start_of(spans: &[OriginalSpan]) -> usize {
    spans.first().map_or(usize::MAX, |s| s.start)
}

/// One-to-one matching of predictions against references.
///
/// Candidate pairs are taken greedily by decreasing IoU; ties go to the
/// pair with the smaller reference start, then the smaller prediction
/// start, then input order. Unmatched entities are listed in input order.
pub fn align_entities(pred: &[Entity], reference: &[Entity], spec: &MatchSpec) -> Alignment {
    let p_spans: Vec<Vec<OriginalSpan>> = pred.iter().map(Entity::normalized_spans).collect();
    let r_spans: Vec<Vec<OriginalSpan>> = reference.iter().map(Entity::normalized_spans).collect();

    let mut cands = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, r) in reference.iter().enumerate() {
            if spec.label_sensitive && p.label != r.label {
                continue;
            }
            let (a, b) = (&p_spans[i], &r_spans[j]);
            let inter = intersection(a, b);
            let union = total(a) + total(b) - inter;
            let ok = match spec.mode {
                MatchMode::Exact => a == b,
                MatchMode::Overlap => inter > 0 && inter as f64 / union as f64 >= spec.iou_threshold,
            };
            if ok {
                cands.push(Candidate {
                    pred: i,
                    reference: j,
                    inter,
                    union: union.max(1),
                });
            }
        }
    }
    cands.sort_by(|x, y| {
        // x.inter / x.union > y.inter / y.union first
        let lhs = x.inter as u128 * y.union as u128;
        let rhs = y.inter as u128 * x.union as u128;
        rhs.cmp(&lhs)
            .then_with(|| start_of(&r_spans[x.reference]).cmp(&start_of(&r_spans[y.reference])))
            .then_with(|| start_of(&p_spans[x.pred]).cmp(&start_of(&p_spans[y.pred])))
            .then_with(|| (x.reference, x.pred).cmp(&(y.reference, y.pred)))
    });

    let mut p_used = vec![false; pred.len()];
    let mut r_used = vec![false; reference.len()];
    let mut out = Alignment::default();
    for c in cands {
        if p_used[c.pred] || r_used[c.reference] {
            continue;
        }
        p_used[c.pred] = true;
        r_used[c.reference] = true;
        out.matches.push(MatchedPair {
            pred: EntityRef::of(&pred[c.pred]),
            reference: EntityRef::of(&reference[c.reference]),
            iou: if c.inter == 0 { 1.0 } else { c.inter as f64 / c.union as f64 },
        });
    }
    out.unmatched_pred = pred.iter().zip(&p_used).filter(|(_, u)| !**u).map(|(e, _)| EntityRef::of(e)).collect();
    out.unmatched_ref = reference.iter().zip(&r_used).filter(|(_, u)| !**u).map(|(e, _)| EntityRef::of(e)).collect();
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Scores {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }

    fn add(&self, other: &Scores) -> Self {
        Self::from_counts(self.tp + other.tp, self.fp + other.fp, self.fn_ + other.fn_)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_label: BTreeMap<String, Scores>,
    pub micro: Scores,
}

impl Metrics {
    /// Build from per-label `(tp, fp, fn)` counts; micro counts are their sums.
    pub fn from_counts(counts: BTreeMap<String, (usize, usize, usize)>) -> Self {
        let mut m = Metrics::default();
        for (label, (tp, fp, fn_)) in counts {
            let s = Scores::from_counts(tp, fp, fn_);
            m.micro = m.micro.add(&s);
            m.per_label.insert(label, s);
        }
        m
    }

    /// Sum the counts of several metrics, then score.
    pub fn combine<'a>(parts: impl IntoIterator<Item = &'a Metrics>) -> Metrics {
        let mut counts: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
        for m in parts {
            for (label, s) in &m.per_label {
                let c = counts.entry(label.clone()).or_default();
                c.0 += s.tp;
                c.1 += s.fp;
                c.2 += s.fn_;
            }
        }
        Metrics::from_counts(counts)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    /// Aligned plain-text table, one row per label then `micro`.
    pub fn render(&self) -> String {
        let header = ["label", "tp", "fp", "fn", "precision", "recall", "f1"];
        let mut rows = vec![header.map(String::from).to_vec()];
        let mut row = |name: &str, s: &Scores| {
            rows.push(vec![
                name.to_string(),
                s.tp.to_string(),
                s.fp.to_string(),
                s.fn_.to_string(),
                num(s.precision),
                num(s.recall),
                num(s.f1),
            ])
        };
        for (label, s) in &self.per_label {
            row(label, s);
        }
        row("micro", &self.micro);
        table(&rows)
    }
}

/// Per-label and micro counts for one document.
pub fn score(alignment: &Alignment) -> Metrics {
    let mut counts: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    // a match counts for the reference label
    for m in &alignment.matches {
        counts.entry(m.reference.label.clone()).or_default().0 += 1;
    }
    for e in &alignment.unmatched_pred {
        counts.entry(e.label.clone()).or_default().1 += 1;
    }
    for e in &alignment.unmatched_ref {
        counts.entry(e.label.clone()).or_default().2 += 1;
    }
    Metrics::from_counts(counts)
}

/// Align and score a corpus of `(predictions, references)` pairs, one pair
/// per document. Counts are summed over documents before scoring.
pub fn evaluate_corpus(docs: &[(Vec<Entity>, Vec<Entity>)], spec: &MatchSpec) -> Metrics {
    let per_doc = |(p, r): &(Vec<Entity>, Vec<Entity>)| score(&align_entities(p, r, spec));
    #[cfg(feature = "parallel")]
    let parts: Vec<Metrics> = {
        use rayon::prelude::*;
        docs.par_iter().map(per_doc).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Metrics> = docs.iter().map(per_doc).collect();
    Metrics::combine(&parts)
}

fn num(x: f64) -> String {
    format!("{x:.4}")
}

fn delta(x: f64) -> String {
    format!("{x:+.4}")
}

fn table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(i, s)| if i == 0 { format!("{s:<w$}", w = widths[i]) } else { format!("{s:>w$}", w = widths[i]) })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Winner {
    A,
    B,
    Tie,
}

/// Side-by-side comparison of two runs scored against the same references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub name_a: String,
    pub name_b: String,
    pub a: Metrics,
    pub b: Metrics,
    pub winner: Winner,
}

pub fn compare_runs(name_a: &str, a: &Metrics, name_b: &str, b: &Metrics) -> Comparison {
    let winner = match a.micro.f1.partial_cmp(&b.micro.f1) {
        Some(Ordering::Greater) => Winner::A,
        Some(Ordering::Less) => Winner::B,
        _ => Winner::Tie,
    };
    Comparison {
        name_a: name_a.into(),
        name_b: name_b.into(),
        a: a.clone(),
        b: b.clone(),
        winner,
    }
}

impl Comparison {
    pub fn winner_name(&self) -> &str {
        match self.winner {
            Winner::A => &self.name_a,
            Winner::B => &self.name_b,
            Winner::Tie => "tie",
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }
}

impl fmt::Display for Comparison {
    /// Precision, recall and F1 of both runs per label, with deltas (b - a).
    /// Cells of a label absent from one run are shown as `-`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (na, nb) = (&self.name_a, &self.name_b);
        let mut rows = vec![vec![
            "label".to_string(),
            format!("{na} p"),
            format!("{na} r"),
            format!("{na} f1"),
            format!("{nb} p"),
            format!("{nb} r"),
            format!("{nb} f1"),
            "delta p".into(),
            "delta r".into(),
            "delta f1".into(),
        ]];
        let cells = |s: Option<&Scores>| match s {
            Some(s) => vec![num(s.precision), num(s.recall), num(s.f1)],
            None => vec!["-".into(); 3],
        };
        let mut push = |name: &str, a: Option<&Scores>, b: Option<&Scores>| {
            let mut row = vec![name.to_string()];
            row.extend(cells(a));
            row.extend(cells(b));
            match (a, b) {
                (Some(a), Some(b)) => row.extend([
                    delta(b.precision - a.precision),
                    delta(b.recall - a.recall),
                    delta(b.f1 - a.f1),
                ]),
                _ => row.extend(vec!["-".to_string(); 3]),
            }
            rows.push(row);
        };
        let labels: BTreeSet<&String> = self.a.per_label.keys().chain(self.b.per_label.keys()).collect();
        for label in labels {
            push(label, self.a.per_label.get(label), self.b.per_label.get(label));
        }
        push("micro", Some(&self.a.micro), Some(&self.b.micro));
        f.write_str(&table(&rows))?;
        writeln!(f, "winner: {}", self.winner_name())
    }
}
