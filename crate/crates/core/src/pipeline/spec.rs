use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PipelineError, Registry};
use crate::io::text::read_utf8;

pub type Params = serde_json::Map<String, serde_json::Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineStep {
    /// Registered operation name.
    pub op: String,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub params: Params,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl PipelineStep {
    pub fn new(op: &str, inputs: &[&str], outputs: &[&str]) -> Self {
        Self {
            op: op.into(),
            params: Params::new(),
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn with_params(mut self, params: serde_json::Value) -> Self {
        if let serde_json::Value::Object(map) = params {
            self.params = map;
        }
        self
    }
}

/// A declarative pipeline. `pipelines` optionally carries sub-pipelines
/// that are registered, in order, before this one is compiled, so that a
/// single config file can describe nested pipelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub name: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub steps: Vec<PipelineStep>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pipelines: Vec<PipelineSpec>,
}

impl PipelineSpec {
    pub fn new(name: &str, inputs: &[&str], outputs: &[&str], steps: Vec<PipelineStep>) -> Self {
        Self {
            name: name.into(),
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            steps,
            pipelines: Vec::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = read_utf8(path).map_err(|e| PipelineError::Config(e.to_string()))?;
        Self::from_json(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IssueKind {
    UnknownOperation,
    ArityMismatch,
    EmptyKeys,
    ForwardReference,
    UndefinedKey,
    DuplicateProducer,
    OutputNeverProduced,
    Cycle,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationIssue {
    /// Index of the offending step, `None` for pipeline-level issues.
    pub step: Option<usize>,
    pub kind: IssueKind,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step {
            Some(i) => write!(f, "step {i}: {}", self.message),
            None => write!(f, "pipeline: {}", self.message),
        }
    }
}

/// Check a spec against the operations of `registry`. An empty list means
/// the spec is valid.
pub fn validate_pipeline(spec: &PipelineSpec, registry: &Registry) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let mut push = |step, kind, message: String| {
        issues.push(ValidationIssue { step, kind, message })
    };

    if spec.name.is_empty() {
        push(None, IssueKind::EmptyKeys, "pipeline name is empty".into());
    }
    if spec.inputs.iter().chain(&spec.outputs).any(String::is_empty) {
        push(None, IssueKind::EmptyKeys, "empty key in pipeline inputs or outputs".into());
    }

    // key -> index of the step producing it
    let mut producer: HashMap<&str, usize> = HashMap::new();
    for (i, step) in spec.steps.iter().enumerate() {
        for key in &step.outputs {
            if spec.inputs.contains(key) {
                push(
                    Some(i),
                    IssueKind::DuplicateProducer,
                    format!("output {key:?} shadows a pipeline input"),
                );
            } else if let Some(&first) = producer.get(key.as_str()) {
                push(
                    Some(i),
                    IssueKind::DuplicateProducer,
                    format!("output {key:?} is already produced by step {first}"),
                );
            } else {
                producer.insert(key, i);
            }
        }
    }

    let mut available: HashSet<&str> = spec.inputs.iter().map(String::as_str).collect();
    for (i, step) in spec.steps.iter().enumerate() {
        if step.op == spec.name {
            push(
                Some(i),
                IssueKind::Cycle,
                format!("step {:?} refers to the pipeline itself", step.op),
            );
        } else {
            match registry.get(&step.op) {
                None => push(
                    Some(i),
                    IssueKind::UnknownOperation,
                    format!("unknown operation {:?}", step.op),
                ),
                Some(reg) => {
                    if step.inputs.len() != reg.inputs {
                        push(
                            Some(i),
                            IssueKind::ArityMismatch,
                            format!(
                                "{} takes {} input(s), got {}",
                                step.op,
                                reg.inputs,
                                step.inputs.len()
                            ),
                        );
                    }
                    if !reg.outputs.contains(&step.outputs.len()) {
                        push(
                            Some(i),
                            IssueKind::ArityMismatch,
                            format!(
                                "{} yields {}..={} output(s), got {}",
                                step.op,
                                reg.outputs.start(),
                                reg.outputs.end(),
                                step.outputs.len()
                            ),
                        );
                    }
                }
            }
        }
        if step.inputs.is_empty() || step.outputs.is_empty() {
            push(Some(i), IssueKind::EmptyKeys, "step input and output lists must be non-empty".into());
        }
        if step.inputs.iter().chain(&step.outputs).any(String::is_empty) {
            push(Some(i), IssueKind::EmptyKeys, "empty key".into());
        }
        for key in &step.inputs {
            if available.contains(key.as_str()) {
                continue;
            }
            match producer.get(key.as_str()) {
                Some(&p) if p >= i => push(
                    Some(i),
                    IssueKind::ForwardReference,
                    format!("input {key:?} is produced later, by step {p}"),
                ),
                _ => push(
                    Some(i),
                    IssueKind::UndefinedKey,
                    format!("input {key:?} is never produced"),
                ),
            }
        }
        available.extend(step.outputs.iter().map(String::as_str));
    }

    for key in &spec.outputs {
        if !available.contains(key.as_str()) {
            push(
                None,
                IssueKind::OutputNeverProduced,
                format!("output {key:?} is never produced"),
            );
        }
    }
    issues
}
