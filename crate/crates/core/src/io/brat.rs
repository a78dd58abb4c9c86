//! Brat standoff (`.ann`) reading and writing.
//!
//! Supported lines:
//!
//! ```text
//! T<i>\t<label> <start> <end>[;<start> <end>]*\t<surface>
//! A<j>\t<label> T<i>[ <value>]
//! R<k>\t<label> Arg1:T<i> Arg2:T<j>
//! ```
//!
//! Other sigils (`#`, `N`, `E`, `*`) are skipped and counted. Offsets are
//! code points into the `.txt` file; discontinuous fragments are joined by a
//! single space in the surface text.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::model::{Annotation, Attribute, Document, Entity, Relation, Scalar, Segment};
use crate::span::{self, OriginalSpan, Span};

use super::ConvertError;

#[derive(Debug, Clone, PartialEq)]
pub struct BratDocument {
    /// Entities (with their attributes) in file order, then relations.
    pub annotations: Vec<Annotation>,
    /// Lines with an unsupported sigil.
    pub skipped: usize,
}

fn malformed(line: usize, reason: impl Into<String>) -> ConvertError {
    ConvertError::MalformedLine {
        line,
        reason: reason.into(),
    }
}

fn parse_offset(s: &str, line: usize) -> Result<usize, ConvertError> {
    s.parse()
        .map_err(|_| malformed(line, format!("invalid offset {s:?}")))
}

fn check_id(id: &str, sigil: char, line: usize) -> Result<(), ConvertError> {
    let digits = id.strip_prefix(sigil).unwrap_or("");
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed(line, format!("invalid id {id:?}")));
    }
    Ok(())
}

fn relation_arg<'s>(a: &'s str, name: &str, line: usize) -> Result<&'s str, ConvertError> {
    a.strip_prefix(name)
        .and_then(|s| s.strip_prefix(':'))
        .ok_or_else(|| malformed(line, format!("expected {name}:<id>, got {a:?}")))
}

fn parse_entity(
    fields: &[&str],
    line: usize,
    doc_text: &str,
    doc_len: usize,
) -> Result<Entity, ConvertError> {
    if fields.len() != 3 {
        return Err(malformed(line, "entity line needs 3 tab-separated fields"));
    }
    let (label, offsets) = fields[1]
        .split_once(' ')
        .ok_or_else(|| malformed(line, "missing offsets"))?;
    if label.is_empty() {
        return Err(malformed(line, "empty label"));
    }
    let mut fragments = Vec::new();
    for frag in offsets.split(';') {
        let mut parts = frag.split(' ');
        let (Some(s), Some(e), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(malformed(line, format!("invalid fragment {frag:?}")));
        };
        let (s, e) = (parse_offset(s, line)?, parse_offset(e, line)?);
        if s >= e {
            return Err(malformed(line, format!("empty or reversed fragment {s} {e}")));
        }
        if e > doc_len {
            return Err(malformed(line, format!("fragment end {e} beyond text length {doc_len}")));
        }
        if fragments.last().is_some_and(|p: &OriginalSpan| p.end > s) {
            return Err(malformed(line, "fragments unsorted or overlapping"));
        }
        fragments.push(OriginalSpan::new(s, e));
    }

    let pieces: Vec<(&str, Vec<Span>)> = fragments
        .iter()
        .map(|f| (span::char_slice(doc_text, f.start, f.end), vec![Span::Original(*f)]))
        .collect();
    let parts: Vec<(&str, &[Span])> = pieces.iter().map(|(t, s)| (*t, s.as_slice())).collect();
    let (expected, spans) = span::concatenate(&parts, " ");
    let surface = fields[2];
    if surface != expected {
        return Err(ConvertError::SurfaceMismatch {
            line,
            expected,
            found: surface.to_owned(),
        });
    }
    Ok(Segment::new(label, expected, spans)?)
}

/// Parse the content of an `.ann` file against its `.txt` content.
pub fn parse_brat(ann_text: &str, doc_text: &str) -> Result<BratDocument, ConvertError> {
    let doc_len = doc_text.chars().count();
    let mut entities: Vec<Entity> = Vec::new();
    let mut by_tid: HashMap<&str, usize> = HashMap::new();
    let mut later: Vec<(usize, &str, Vec<&str>)> = Vec::new();
    let mut skipped = 0;

    for (i, raw) in ann_text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        let id = fields[0];
        match id.chars().next() {
            Some('T') => {
                check_id(id, 'T', line)?;
                let ent = parse_entity(&fields, line, doc_text, doc_len)?;
                if by_tid.insert(id, entities.len()).is_some() {
                    return Err(malformed(line, format!("duplicate id {id}")));
                }
                entities.push(ent);
            }
            Some('A' | 'M' | 'R') => later.push((line, id, fields)),
            _ => {
                log::warn!("skipping unsupported brat line {line}: {raw:?}");
                skipped += 1;
            }
        }
    }

    let mut relations = Vec::new();
    let mut seen_ids = std::collections::HashSet::new();
    for (line, id, fields) in later {
        if !seen_ids.insert(id) {
            return Err(malformed(line, format!("duplicate id {id}")));
        }
        let target = |tid: &str| {
            by_tid
                .get(tid)
                .copied()
                .ok_or_else(|| malformed(line, format!("unknown target {tid:?}")))
        };
        if fields.len() != 2 {
            return Err(malformed(line, "expected 2 tab-separated fields"));
        }
        if id.starts_with('R') {
            check_id(id, 'R', line)?;
            let parts: Vec<&str> = fields[1].split(' ').collect();
            let [label, a1, a2] = parts.as_slice() else {
                return Err(malformed(line, "relation needs a label and two arguments"));
            };
            let (src, tgt) = (
                target(relation_arg(a1, "Arg1", line)?)?,
                target(relation_arg(a2, "Arg2", line)?)?,
            );
            if label.is_empty() {
                return Err(malformed(line, "empty label"));
            }
            relations.push(Relation::new(*label, &entities[src].id, &entities[tgt].id));
        } else {
            check_id(id, id.chars().next().unwrap_or('A'), line)?;
            let mut parts = fields[1].splitn(3, ' ');
            let label = parts.next().unwrap_or_default();
            let tid = parts
                .next()
                .ok_or_else(|| malformed(line, "attribute needs a target"))?;
            if label.is_empty() {
                return Err(malformed(line, "empty label"));
            }
            let value = match parts.next() {
                Some(v) if !v.is_empty() => Scalar::Str(v.to_owned()),
                Some(_) => return Err(malformed(line, "empty attribute value")),
                None => Scalar::Bool(true),
            };
            let idx = target(tid)?;
            entities[idx].add_attribute(Attribute::new(label, value))?;
        }
    }

    let mut annotations: Vec<Annotation> = entities.into_iter().map(Annotation::Entity).collect();
    annotations.extend(relations.into_iter().map(Annotation::Relation));
    Ok(BratDocument {
        annotations,
        skipped,
    })
}

/// Split projected ranges at line breaks: brat fragments cannot span lines.
fn fragments(doc: &Document, seg: &Segment) -> Vec<OriginalSpan> {
    let chars: Vec<char> = doc.text().chars().collect();
    let mut out = Vec::new();
    for n in seg.normalized_spans() {
        let mut start = n.start;
        for i in n.start..n.end {
            if chars[i] == '\n' || chars[i] == '\r' {
                if start < i {
                    out.push(OriginalSpan::new(start, i));
                }
                start = i + 1;
            }
        }
        if start < n.end {
            out.push(OriginalSpan::new(start, n.end));
        }
    }
    out
}

fn one_line(v: &str) -> String {
    v.replace(['\t', '\n', '\r'], " ")
}

/// Write segments, entities and relations as brat standoff.
///
/// Ids restart at `T1`, `A1` and `R1` for every document. Entity offsets come
/// from the projection of each span chain onto the raw text, so annotations
/// found on transformed text are reported at their original position.
/// Attributes valued `false` or `null` are left out (absent means false in
/// brat); other non-string values are written in their display form.
pub fn emit_brat<'a>(
    doc: &Document,
    annotations: impl IntoIterator<Item = &'a Annotation>,
) -> Result<String, ConvertError> {
    let mut t_lines = String::new();
    let mut a_lines = String::new();
    let mut r_lines = String::new();
    let mut tids: HashMap<&str, usize> = HashMap::new();
    let mut relations = Vec::new();
    let (mut n_attr, mut n_rel) = (0, 0);

    for ann in annotations {
        let seg = match ann {
            Annotation::Segment(s) | Annotation::Entity(s) => s,
            Annotation::Relation(r) => {
                relations.push(r);
                continue;
            }
        };
        if let Some(f) = seg.normalized_spans().iter().find(|f| f.end > doc.len()) {
            return Err(ConvertError::OutOfBounds {
                start: f.start,
                end: f.end,
                len: doc.len(),
            });
        }
        let frags = fragments(doc, seg);
        if frags.is_empty() {
            return Err(ConvertError::EmptyProjection(seg.id.clone()));
        }
        let tid = tids.len() + 1;
        tids.insert(&seg.id, tid);
        let offsets: Vec<String> = frags.iter().map(|f| format!("{} {}", f.start, f.end)).collect();
        let _ = writeln!(
            t_lines,
            "T{tid}\t{} {}\t{}",
            seg.label,
            offsets.join(";"),
            doc.slice(&frags, " ")
        );
        for attr in &seg.attributes {
            let value = match &attr.value {
                Scalar::Bool(true) => None,
                Scalar::Bool(false) | Scalar::Null => continue,
                other => Some(one_line(&other.to_string())),
            };
            n_attr += 1;
            let _ = write!(a_lines, "A{n_attr}\t{} T{tid}", attr.label);
            if let Some(v) = value {
                let _ = write!(a_lines, " {v}");
            }
            a_lines.push('\n');
        }
    }
    for rel in relations {
        let lookup = |id: &str| {
            tids.get(id).copied().ok_or_else(|| ConvertError::UnknownReference {
                relation: rel.id.clone(),
                target: id.to_owned(),
            })
        };
        let (src, tgt) = (lookup(&rel.source_id)?, lookup(&rel.target_id)?);
        n_rel += 1;
        let _ = writeln!(r_lines, "R{n_rel}\t{} Arg1:T{src} Arg2:T{tgt}", rel.label);
    }
    Ok(t_lines + &a_lines + &r_lines)
}

/// Rewrite an `.ann` file into the layout [`emit_brat`] produces: entity
/// lines, then attribute lines grouped by entity, then relations; ids
/// renumbered from 1 in order; `\n` line endings; unsupported lines dropped.
///
/// Works on the text alone, without parsing offsets or checking surfaces.
pub fn canonicalize_brat(ann_text: &str) -> String {
    let mut t_map: HashMap<&str, usize> = HashMap::new();
    let mut t_out = Vec::new();
    let mut attrs: Vec<(usize, String)> = Vec::new();
    let mut rels = Vec::new();

    let lines: Vec<&str> = ann_text.lines().filter(|l| !l.trim().is_empty()).collect();
    for l in &lines {
        if l.starts_with('T') {
            let mut fields = l.splitn(2, '\t');
            let id = fields.next().unwrap_or_default();
            t_map.insert(id, t_map.len() + 1);
            t_out.push(format!("T{}\t{}", t_map.len(), fields.next().unwrap_or_default()));
        }
    }
    for l in &lines {
        let Some((id, body)) = l.split_once('\t') else {
            continue;
        };
        if id.starts_with('A') || id.starts_with('M') {
            let mut parts = body.splitn(3, ' ');
            let label = parts.next().unwrap_or_default();
            let target = parts.next().unwrap_or_default();
            let n = t_map.get(target).copied().unwrap_or(0);
            let mut rest = format!("{label} T{n}");
            if let Some(v) = parts.next() {
                rest.push(' ');
                rest.push_str(v);
            }
            attrs.push((n, rest));
        } else if id.starts_with('R') {
            let renamed: Vec<String> = body
                .split(' ')
                .map(|p| match p.split_once(':') {
                    Some((arg, t)) => format!("{arg}:T{}", t_map.get(t).copied().unwrap_or(0)),
                    None => p.to_owned(),
                })
                .collect();
            rels.push(renamed.join(" "));
        }
    }
    attrs.sort_by_key(|(n, _)| *n);

    let mut out = String::new();
    for t in t_out {
        out.push_str(&t);
        out.push('\n');
    }
    for (i, (_, a)) in attrs.iter().enumerate() {
        let _ = writeln!(out, "A{}\t{a}", i + 1);
    }
    for (i, r) in rels.iter().enumerate() {
        let _ = writeln!(out, "R{}\t{r}", i + 1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Metadata;

    const TEXT: &str = "Patient sous aspirine.";

    fn only_entity(doc: &BratDocument) -> &Segment {
        doc.annotations[0].as_segment().unwrap()
    }

    #[test]
    fn parse_continuous() {
        let parsed = parse_brat("T1\tDrug 13 21\taspirine\n", TEXT).unwrap();
        let e = only_entity(&parsed);
        assert_eq!(e.label, "Drug");
        assert_eq!(e.text, "aspirine");
        assert_eq!(e.spans, vec![Span::original(13, 21)]);
    }

    #[test]
    fn parse_discontinuous() {
        let parsed = parse_brat("T1\tX 0 2;4 6\tab cd", "abxxcdy").unwrap();
        let e = only_entity(&parsed);
        assert_eq!(e.text, "ab cd");
        assert_eq!(
            e.normalized_spans(),
            vec![OriginalSpan::new(0, 2), OriginalSpan::new(4, 6)]
        );
        assert_eq!(span::span_length(&e.spans), 5);
    }

    #[test]
    fn parse_attributes_and_relations() {
        let ann = "T1\tDrug 13 21\taspirine\nT2\tW 0 7\tPatient\nA1\tnegated T1\nA2\tcertainty T1 low\nR1\ttakes Arg1:T2 Arg2:T1\n#1\tAnnotatorNotes T1\tnote\n";
        let parsed = parse_brat(ann, TEXT).unwrap();
        assert_eq!(parsed.skipped, 1);
        let e = only_entity(&parsed);
        assert_eq!(e.attributes[0].label, "negated");
        assert_eq!(e.attributes[0].value, Scalar::Bool(true));
        assert_eq!(e.attributes[1].value, Scalar::Str("low".into()));
        let Annotation::Relation(r) = &parsed.annotations[2] else {
            panic!("expected relation")
        };
        assert_eq!(r.source_id, parsed.annotations[1].id());
        assert_eq!(r.target_id, parsed.annotations[0].id());
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let cases = [
            ("T1 Drug 0 2 ab", 1),
            ("T1\tDrug 13 21\taspirine\nT2\tDrug x 21\tfoo", 2),
            ("T1\tDrug 13 21\taspirine\nA1\tneg T9", 2),
            ("T1\tDrug 13 99\taspirine", 1),
            ("T1\tDrug 21 13\taspirine", 1),
        ];
        for (ann, line) in cases {
            match parse_brat(ann, TEXT) {
                Err(ConvertError::MalformedLine { line: l, .. }) => assert_eq!(l, line, "{ann:?}"),
                other => panic!("{ann:?}: unexpected {other:?}"),
            }
        }
        assert!(matches!(
            parse_brat("\n\nT1\tDrug 13 21\taspirin", TEXT),
            Err(ConvertError::SurfaceMismatch { line: 3, .. })
        ));
    }

    fn doc_with(ann: &str, text: &str) -> (Document, Vec<Annotation>) {
        let parsed = parse_brat(ann, text).unwrap();
        (Document::new(text, Metadata::new()), parsed.annotations)
    }

    #[test]
    fn emit_examples() {
        let (doc, anns) = doc_with("T1\tDrug 13 21\taspirine\n", TEXT);
        assert_eq!(emit_brat(&doc, &anns).unwrap(), "T1\tDrug 13 21\taspirine\n");

        let (doc, anns) = doc_with("T1\tX 0 2;4 6\tab cd\n", "abxxcdy");
        assert_eq!(emit_brat(&doc, &anns).unwrap(), "T1\tX 0 2;4 6\tab cd\n");
    }

    #[test]
    fn emit_rejects_pure_insertions() {
        let doc = Document::new(TEXT, Metadata::new());
        let e = Segment::new("X", "[DATE]", vec![Span::modified(6, vec![])]).unwrap();
        assert!(matches!(
            emit_brat(&doc, &[Annotation::Entity(e)]),
            Err(ConvertError::EmptyProjection(_))
        ));
    }

    #[test]
    fn emit_uses_original_offsets_after_replacement() {
        let doc = Document::new("Né le 12/03/1980.", Metadata::new());
        let raw = doc.raw_segment();
        let (t, c) = span::replace(&raw.text, &raw.spans, &[6..16], &["[DATE]"]).unwrap();
        let s = Segment::new("sentence", t, c).unwrap();
        let out = emit_brat(&doc, &[Annotation::Segment(s)]).unwrap();
        assert_eq!(out, "T1\tsentence 0 17\tNé le 12/03/1980.\n");
    }

    #[test]
    fn emit_splits_at_newlines() {
        let doc = Document::new("ab\ncd", Metadata::new());
        let s = Segment::new("X", "ab\ncd", vec![Span::original(0, 5)]).unwrap();
        assert_eq!(
            emit_brat(&doc, &[Annotation::Segment(s)]).unwrap(),
            "T1\tX 0 2;3 5\tab cd\n"
        );
    }

    #[test]
    fn canonical_form() {
        let messy = "T7\tDrug 13 21\taspirine\r\nR3\ttakes Arg1:T2 Arg2:T7\r\nT2\tW 0 7\tPatient\r\nA5\tneg T2\r\nA1\tneg T7\r\n";
        let canon = canonicalize_brat(messy);
        assert_eq!(
            canon,
            "T1\tDrug 13 21\taspirine\nT2\tW 0 7\tPatient\nA1\tneg T1\nA2\tneg T2\nR1\ttakes Arg1:T2 Arg2:T1\n"
        );
        let (doc, anns) = doc_with(messy, TEXT);
        assert_eq!(emit_brat(&doc, &anns).unwrap(), canon);
    }
}
