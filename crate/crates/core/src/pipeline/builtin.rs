use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde_json::Value as Json;

use super::{
    Context, Derivation, Mode, OpOutput, Operation, Params, PipelineError, Registration, Registry,
    Value,
};
use crate::io;
use crate::model::{Annotation, Document, Metadata, Scalar, Segment};
use crate::ops::{
    self, sentences::DEFAULT_PUNCT, ContextDetector, ContextRuleSet, DateMatcher, DeidRule,
    Deidentifier, DictionaryEntry, DictionaryMatcher, RegexMatcher, RegexRule,
};
use crate::provenance::OperationDescriptor;

pub(super) fn register_all(r: &mut Registry) {
    let mut add = |name: &str, inputs: usize, outputs: std::ops::RangeInclusive<usize>, factory: super::Factory| {
        r.register(name, Registration { inputs, outputs, factory })
            .expect("built-in names are unique");
    };
    add("create_document", 1, 1..=1, Arc::new(|p, _, _| CreateDocument::build(p)));
    add("split_sentences", 1, 1..=1, Arc::new(|p, _, _| SplitSentences::build(p)));
    add("deidentify", 1, 1..=2, Arc::new(|p, n, _| Deidentify::build(p, n)));
    add("match_dictionary", 1, 1..=1, Arc::new(|p, _, r| MatchDictionary::build(p, r)));
    add("match_regex", 1, 1..=1, Arc::new(|p, _, _| MatchRegex::build(p)));
    add("match_dates", 1, 1..=1, Arc::new(|p, _, _| MatchDates::build(p)));
    add("detect_context", 2, 1..=1, Arc::new(|p, _, _| DetectContext::build(p)));
    add("emit_brat", 2, 1..=1, Arc::new(|p, _, _| EmitBrat::build(p)));
}

fn params_error(op: &str, reason: impl Into<String>) -> PipelineError {
    PipelineError::Params {
        op: op.into(),
        reason: reason.into(),
    }
}

/// Rejects unknown keys so that typos in configs are reported.
fn check_keys(op: &str, params: &Params, allowed: &[&str]) -> Result<(), PipelineError> {
    match params.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(params_error(op, format!("unknown parameter {k:?}"))),
        None => Ok(()),
    }
}

fn param<T: DeserializeOwned>(op: &str, params: &Params, key: &str) -> Result<Option<T>, PipelineError> {
    params
        .get(key)
        .map(|v| serde_json::from_value(v.clone()).map_err(|e| params_error(op, format!("{key}: {e}"))))
        .transpose()
}

/// Flatten JSON parameters into descriptor scalars; lists and objects are
/// kept as compact JSON strings.
fn describe(name: &str, params: &Params) -> OperationDescriptor {
    let config: BTreeMap<String, Scalar> = params
        .iter()
        .map(|(k, v)| {
            let s = match v {
                Json::Null => Scalar::Null,
                Json::Bool(b) => Scalar::Bool(*b),
                Json::Number(n) => match n.as_i64() {
                    Some(i) => Scalar::Int(i),
                    None => Scalar::Float(n.as_f64().unwrap_or(f64::NAN)),
                },
                Json::String(s) => Scalar::Str(s.clone()),
                other => Scalar::Str(other.to_string()),
            };
            (k.clone(), s)
        })
        .collect();
    OperationDescriptor::new(name, config)
}

fn type_error(op: &str, expected: &'static str, found: &Value) -> PipelineError {
    PipelineError::Type {
        op: op.into(),
        expected,
        found: found.kind(),
    }
}

/// The text-bearing segment behind a value: a document's raw segment or the
/// segment itself.
fn segment_of<'a>(op: &str, v: &'a Value) -> Result<std::borrow::Cow<'a, Segment>, PipelineError> {
    match v {
        Value::Document(d) => Ok(std::borrow::Cow::Owned(d.raw_segment())),
        Value::Annotation(Annotation::Segment(s) | Annotation::Entity(s)) => Ok(std::borrow::Cow::Borrowed(s)),
        other => Err(type_error(op, "document or segment", other)),
    }
}

fn single<'a>(inputs: &'a [Vec<Value>]) -> &'a Value {
    &inputs[0][0]
}

fn entity_output(source: &Value, ents: Vec<Segment>) -> OpOutput {
    let sources = vec![source.id().to_owned()];
    let derivations = ents
        .iter()
        .map(|e| Derivation::new(vec![e.id.clone()], sources.clone()))
        .collect();
    OpOutput {
        slots: vec![ents.into_iter().map(|e| Value::Annotation(Annotation::Entity(e))).collect()],
        derivations,
    }
}

struct CreateDocument {
    desc: OperationDescriptor,
}

impl CreateDocument {
    fn build(p: &Params) -> Result<Arc<dyn Operation>, PipelineError> {
        check_keys("create_document", p, &[])?;
        Ok(Arc::new(Self {
            desc: describe("create_document", p),
        }))
    }
}

impl Operation for CreateDocument {
    fn descriptor(&self) -> &OperationDescriptor {
        &self.desc
    }

    fn run(&self, inputs: &[Vec<Value>], _: &mut Context<'_>) -> Result<OpOutput, PipelineError> {
        let item = single(inputs);
        let Value::Text { id, text } = item else {
            return Err(type_error("create_document", "text", item));
        };
        let doc = Document::new(text.clone(), Metadata::new());
        Ok(OpOutput {
            derivations: vec![Derivation::new(vec![doc.id().to_owned()], vec![id.clone()])],
            slots: vec![vec![Value::Document(doc)]],
        })
    }
}

struct SplitSentences {
    desc: OperationDescriptor,
    punct: Vec<char>,
    keep_punct: bool,
}

impl SplitSentences {
    fn build(p: &Params) -> Result<Arc<dyn Operation>, PipelineError> {
        const OP: &str = "split_sentences";
        check_keys(OP, p, &["punct_chars", "keep_punct"])?;
        let punct: String = param(OP, p, "punct_chars")?.unwrap_or_else(|| DEFAULT_PUNCT.into());
        Ok(Arc::new(Self {
            desc: describe(OP, p),
            punct: punct.chars().collect(),
            keep_punct: param(OP, p, "keep_punct")?.unwrap_or(true),
        }))
    }
}

impl Operation for SplitSentences {
    fn descriptor(&self) -> &OperationDescriptor {
        &self.desc
    }

    fn run(&self, inputs: &[Vec<Value>], _: &mut Context<'_>) -> Result<OpOutput, PipelineError> {
        let item = single(inputs);
        let seg = segment_of("split_sentences", item)?;
        let sents = ops::split_sentences(&seg, &self.punct, self.keep_punct)?;
        let source = vec![item.id().to_owned()];
        Ok(OpOutput {
            derivations: sents
                .iter()
                .map(|s| Derivation::new(vec![s.id.clone()], source.clone()))
                .collect(),
            slots: vec![sents.into_iter().map(|s| Value::Annotation(Annotation::Segment(s))).collect()],
        })
    }
}

struct Deidentify {
    desc: OperationDescriptor,
    inner: Deidentifier,
    with_entities: bool,
}

impl Deidentify {
    fn build(p: &Params, outputs: usize) -> Result<Arc<dyn Operation>, PipelineError> {
        const OP: &str = "deidentify";
        check_keys(OP, p, &["rules"])?;
        let rules: Vec<DeidRule> = param(OP, p, "rules")?.unwrap_or_else(DeidRule::french_defaults);
        Ok(Arc::new(Self {
            desc: describe(OP, p),
            inner: Deidentifier::new(rules)?,
            with_entities: outputs > 1,
        }))
    }
}

impl Operation for Deidentify {
    fn descriptor(&self) -> &OperationDescriptor {
        &self.desc
    }

    fn run(&self, inputs: &[Vec<Value>], _: &mut Context<'_>) -> Result<OpOutput, PipelineError> {
        let item = single(inputs);
        let seg = segment_of("deidentify", item)?;
        let (clean, phi) = self.inner.apply(&seg)?;
        let source = vec![item.id().to_owned()];
        let mut derivations = vec![Derivation::new(vec![clean.id.clone()], source.clone())];
        let mut slots = vec![vec![Value::Annotation(Annotation::Segment(clean))]];
        if self.with_entities {
            derivations.extend(phi.iter().map(|e| Derivation::new(vec![e.id.clone()], source.clone())));
            slots.push(phi.into_iter().map(|e| Value::Annotation(Annotation::Entity(e))).collect());
        }
        Ok(OpOutput { slots, derivations })
    }
}

struct MatchDictionary {
    desc: OperationDescriptor,
    matcher: DictionaryMatcher,
}

impl MatchDictionary {
    fn build(p: &Params, registry: &Registry) -> Result<Arc<dyn Operation>, PipelineError> {
        const OP: &str = "match_dictionary";
        check_keys(OP, p, &["entries", "dictionary_path", "strip_accents"])?;
        let entries: Option<Vec<DictionaryEntry>> = param(OP, p, "entries")?;
        let path: Option<String> = param(OP, p, "dictionary_path")?;
        let entries = match (entries, path) {
            (Some(e), None) => e,
            (None, Some(path)) => ops::load_dictionary(&registry.resolve_path(&path))?,
            _ => return Err(params_error(OP, "give exactly one of \"entries\" and \"dictionary_path\"")),
        };
        let strip = param(OP, p, "strip_accents")?.unwrap_or(true);
        Ok(Arc::new(Self {
            desc: describe(OP, p),
            matcher: DictionaryMatcher::new(entries, strip)?,
        }))
    }
}

impl Operation for MatchDictionary {
    fn descriptor(&self) -> &OperationDescriptor {
        &self.desc
    }

    fn run(&self, inputs: &[Vec<Value>], _: &mut Context<'_>) -> Result<OpOutput, PipelineError> {
        let item = single(inputs);
        let ents = self.matcher.apply(&*segment_of("match_dictionary", item)?)?;
        Ok(entity_output(item, ents))
    }
}

struct MatchRegex {
    desc: OperationDescriptor,
    matcher: RegexMatcher,
}

impl MatchRegex {
    fn build(p: &Params) -> Result<Arc<dyn Operation>, PipelineError> {
        const OP: &str = "match_regex";
        check_keys(OP, p, &["rules"])?;
        let rules: Vec<RegexRule> =
            param(OP, p, "rules")?.ok_or_else(|| params_error(OP, "\"rules\" is required"))?;
        Ok(Arc::new(Self {
            desc: describe(OP, p),
            matcher: RegexMatcher::new(rules)?,
        }))
    }
}

impl Operation for MatchRegex {
    fn descriptor(&self) -> &OperationDescriptor {
        &self.desc
    }

    fn run(&self, inputs: &[Vec<Value>], _: &mut Context<'_>) -> Result<OpOutput, PipelineError> {
        let item = single(inputs);
        let ents = self.matcher.apply(&*segment_of("match_regex", item)?)?;
        Ok(entity_output(item, ents))
    }
}

struct MatchDates {
    desc: OperationDescriptor,
    matcher: DateMatcher,
}

impl MatchDates {
    fn build(p: &Params) -> Result<Arc<dyn Operation>, PipelineError> {
        check_keys("match_dates", p, &[])?;
        Ok(Arc::new(Self {
            desc: describe("match_dates", p),
            matcher: DateMatcher::default(),
        }))
    }
}

impl Operation for MatchDates {
    fn descriptor(&self) -> &OperationDescriptor {
        &self.desc
    }

    fn run(&self, inputs: &[Vec<Value>], _: &mut Context<'_>) -> Result<OpOutput, PipelineError> {
        let item = single(inputs);
        let ents = self.matcher.apply(&*segment_of("match_dates", item)?)?;
        Ok(entity_output(item, ents))
    }
}

/// Inputs: sentences, entities. Output: the entities with the context
/// attribute added (ids unchanged). Each entity is judged within the first
/// sentence that contains it.
struct DetectContext {
    desc: OperationDescriptor,
    detector: ContextDetector,
}

impl DetectContext {
    fn build(p: &Params) -> Result<Arc<dyn Operation>, PipelineError> {
        const OP: &str = "detect_context";
        check_keys(OP, p, &["preset", "rules"])?;
        let preset: Option<String> = param(OP, p, "preset")?;
        let rules: Option<ContextRuleSet> = param(OP, p, "rules")?;
        let rules = match (preset, rules) {
            (None, Some(r)) => r,
            (Some(name), None) => ContextRuleSet::preset(&name)
                .ok_or_else(|| params_error(OP, format!("unknown preset {name:?}")))?,
            (None, None) => ContextRuleSet::negation(),
            (Some(_), Some(_)) => return Err(params_error(OP, "give \"preset\" or \"rules\", not both")),
        };
        Ok(Arc::new(Self {
            desc: describe(OP, p),
            detector: ContextDetector::new(&rules)?,
        }))
    }
}

impl Operation for DetectContext {
    fn descriptor(&self) -> &OperationDescriptor {
        &self.desc
    }

    fn mode(&self) -> Mode {
        Mode::Batch
    }

    fn run(&self, inputs: &[Vec<Value>], _: &mut Context<'_>) -> Result<OpOutput, PipelineError> {
        const OP: &str = "detect_context";
        let sentences: Vec<std::borrow::Cow<'_, Segment>> =
            inputs[0].iter().map(|v| segment_of(OP, v)).collect::<Result<_, _>>()?;
        let covers: Vec<_> = sentences.iter().map(|s| s.normalized_spans()).collect();
        let mut entities: Vec<Segment> = inputs[1]
            .iter()
            .map(|v| match v {
                Value::Annotation(Annotation::Entity(e) | Annotation::Segment(e)) => Ok(e.clone()),
                other => Err(type_error(OP, "entity", other)),
            })
            .collect::<Result<_, _>>()?;

        let mut by_sentence: HashMap<usize, Vec<usize>> = HashMap::new();
        for (i, e) in entities.iter().enumerate() {
            let spans = e.normalized_spans();
            let owner = covers.iter().position(|cover| {
                spans
                    .iter()
                    .all(|t| cover.iter().any(|c| c.start <= t.start && t.end <= c.end))
            });
            match owner {
                Some(s) => by_sentence.entry(s).or_default().push(i),
                None => {
                    return Err(ops::OpError::Scope {
                        entity: e.id.clone(),
                        sentence: "any input sentence".into(),
                    }
                    .into())
                }
            }
        }

        let mut derivations = Vec::new();
        let mut order: Vec<_> = by_sentence.into_iter().collect();
        order.sort_unstable_by_key(|(s, _)| *s);
        for (s, members) in order {
            let group: Vec<Segment> = members.iter().map(|&i| entities[i].clone()).collect();
            let attrs = self.detector.apply(&sentences[s], &group)?;
            for (&i, (_, attr)) in members.iter().zip(attrs) {
                derivations.push(Derivation {
                    outputs: vec![attr.id.clone()],
                    sources: vec![sentences[s].id.clone(), entities[i].id.clone()],
                    detail: true,
                });
                entities[i].add_attribute(attr).map_err(ops::OpError::from)?;
            }
        }
        Ok(OpOutput {
            slots: vec![entities.into_iter().map(|e| Value::Annotation(Annotation::Entity(e))).collect()],
            derivations,
        })
    }
}

/// Inputs: one document, annotations. Output: Brat standoff text.
struct EmitBrat {
    desc: OperationDescriptor,
}

impl EmitBrat {
    fn build(p: &Params) -> Result<Arc<dyn Operation>, PipelineError> {
        check_keys("emit_brat", p, &[])?;
        Ok(Arc::new(Self {
            desc: describe("emit_brat", p),
        }))
    }
}

impl Operation for EmitBrat {
    fn descriptor(&self) -> &OperationDescriptor {
        &self.desc
    }

    fn mode(&self) -> Mode {
        Mode::Batch
    }

    fn run(&self, inputs: &[Vec<Value>], _: &mut Context<'_>) -> Result<OpOutput, PipelineError> {
        const OP: &str = "emit_brat";
        let doc = match inputs[0].as_slice() {
            [Value::Document(d)] => d,
            [other] => return Err(type_error(OP, "document", other)),
            items => {
                return Err(params_error(OP, format!("expected one document, got {}", items.len())))
            }
        };
        let anns: Vec<&Annotation> = inputs[1]
            .iter()
            .map(|v| v.as_annotation().ok_or_else(|| type_error(OP, "annotation", v)))
            .collect::<Result<_, _>>()?;
        let text = io::emit_brat(doc, anns).map_err(ops::OpError::from)?;
        let out = Value::text(text);
        let mut sources = vec![doc.id().to_owned()];
        sources.extend(inputs[1].iter().map(|v| v.id().to_owned()));
        Ok(OpOutput {
            derivations: vec![Derivation::new(vec![out.id().to_owned()], sources)],
            slots: vec![vec![out]],
        })
    }
}
