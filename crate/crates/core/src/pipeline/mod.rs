//! Declarative pipelines.
//!
//! A [`PipelineSpec`] chains registered operations through named data slots.
//! [`Pipeline::compile`] validates a spec against a [`Registry`] and
//! instantiates its operations; [`Pipeline::run`] executes the steps in
//! order, recording provenance in an optional [`Tracer`]. A compiled
//! pipeline is itself an [`Operation`], so it can be registered and used as
//! a step of another pipeline.

mod builtin;
mod spec;

use std::collections::{BTreeMap, HashMap};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::model::{new_id, Annotation, Document, Scalar};
use crate::ops::OpError;
use crate::provenance::{OperationDescriptor, ProvError, Tracer};

pub use spec::{validate_pipeline, IssueKind, Params, PipelineSpec, PipelineStep, ValidationIssue};

/// A data item flowing through a pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Text { id: String, text: String },
    Document(Document),
    Annotation(Annotation),
}

impl Value {
    pub fn text(text: impl Into<String>) -> Self {
        Value::Text {
            id: new_id(),
            text: text.into(),
        }
    }

    pub fn id(&self) -> &str {
        match self {
            Value::Text { id, .. } => id,
            Value::Document(d) => d.id(),
            Value::Annotation(a) => a.id(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Value::Text { .. } => "text",
            Value::Document(_) => "document",
            Value::Annotation(Annotation::Segment(_)) => "segment",
            Value::Annotation(Annotation::Entity(_)) => "entity",
            Value::Annotation(Annotation::Relation(_)) => "relation",
        }
    }

    pub fn as_annotation(&self) -> Option<&Annotation> {
        match self {
            Value::Annotation(a) => Some(a),
            _ => None,
        }
    }
}

pub type Slots = HashMap<String, Vec<Value>>;

/// `outputs` were produced from `sources`. Detail derivations (attributes)
/// are only traced at full verbosity.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivation {
    pub outputs: Vec<String>,
    pub sources: Vec<String>,
    pub detail: bool,
}

impl Derivation {
    pub fn new(outputs: Vec<String>, sources: Vec<String>) -> Self {
        Self {
            outputs,
            sources,
            detail: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OpOutput {
    pub slots: Vec<Vec<Value>>,
    pub derivations: Vec<Derivation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// The engine calls the operation once per item of its single input.
    PerItem,
    /// The operation receives whole slots.
    Batch,
}

/// Tracing state handed to operations. Only composite operations use it.
pub struct Context<'a> {
    pub tracer: Option<&'a mut Tracer>,
    /// Activity enclosing the current run, if nested.
    pub scope: Option<String>,
}

pub trait Operation: Send + Sync {
    fn descriptor(&self) -> &OperationDescriptor;

    fn mode(&self) -> Mode {
        Mode::PerItem
    }

    /// Nested pipelines report `true` and record their own steps.
    fn is_composite(&self) -> bool {
        false
    }

    fn run(&self, inputs: &[Vec<Value>], ctx: &mut Context<'_>) -> Result<OpOutput, PipelineError>;
}

/// Builds an operation from step parameters and the number of outputs the
/// step binds.
pub type Factory = Arc<
    dyn Fn(&Params, usize, &Registry) -> Result<Arc<dyn Operation>, PipelineError> + Send + Sync,
>;

#[derive(Clone)]
pub struct Registration {
    pub inputs: usize,
    pub outputs: RangeInclusive<usize>,
    pub factory: Factory,
}

impl std::fmt::Debug for Registration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registration")
            .field("inputs", &self.inputs)
            .field("outputs", &self.outputs)
            .finish_non_exhaustive()
    }
}

/// Named operation factories. Cloning is cheap.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    ops: BTreeMap<String, Registration>,
    base_dir: Option<PathBuf>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry holding every built-in operation.
    pub fn with_builtins() -> Self {
        let mut r = Self::new();
        builtin::register_all(&mut r);
        r
    }

    /// Directory against which relative paths in step parameters resolve.
    pub fn set_base_dir(&mut self, dir: impl Into<PathBuf>) {
        self.base_dir = Some(dir.into());
    }

    pub fn resolve_path(&self, p: &str) -> PathBuf {
        match &self.base_dir {
            Some(base) if Path::new(p).is_relative() => base.join(p),
            _ => PathBuf::from(p),
        }
    }

    pub fn register(&mut self, name: &str, reg: Registration) -> Result<(), PipelineError> {
        if self.ops.contains_key(name) {
            return Err(PipelineError::DuplicateName(name.into()));
        }
        self.ops.insert(name.into(), reg);
        Ok(())
    }

    /// Register `spec` as an operation named after it.
    pub fn register_pipeline(&mut self, spec: &PipelineSpec) -> Result<(), PipelineError> {
        let reg = as_operation(spec, self)?;
        self.register(&spec.name, reg)
    }

    pub fn get(&self, name: &str) -> Option<&Registration> {
        self.ops.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.ops.keys().map(String::as_str)
    }

    pub fn instantiate(
        &self,
        name: &str,
        params: &Params,
        outputs: usize,
    ) -> Result<Arc<dyn Operation>, PipelineError> {
        let reg = self
            .get(name)
            .ok_or_else(|| PipelineError::UnknownOperation(name.into()))?;
        (reg.factory)(params, outputs, self)
    }
}

/// Wrap a pipeline spec as a registrable operation.
///
/// The spec's own sub-pipelines and the operations it uses are resolved
/// against `registry` as it is now, so a pipeline can never end up calling
/// itself.
pub fn as_operation(spec: &PipelineSpec, registry: &Registry) -> Result<Registration, PipelineError> {
    let pipeline = Arc::new(Pipeline::compile(spec, registry)?);
    Ok(Registration {
        inputs: spec.inputs.len(),
        outputs: spec.outputs.len()..=spec.outputs.len(),
        factory: Arc::new(move |params, _, _| {
            if !params.is_empty() {
                return Err(PipelineError::Params {
                    op: pipeline.spec.name.clone(),
                    reason: "pipelines take no parameters".into(),
                });
            }
            Ok(pipeline.clone() as Arc<dyn Operation>)
        }),
    })
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline: {}", join_issues(.0))]
    Invalid(Vec<ValidationIssue>),
    #[error("operation {0:?} is already registered")]
    DuplicateName(String),
    #[error("unknown operation {0:?}")]
    UnknownOperation(String),
    #[error("missing pipeline input {0:?}")]
    MissingInput(String),
    #[error("step {index} ({op}) failed: {source}")]
    StepFailure {
        index: usize,
        op: String,
        #[source]
        source: Box<PipelineError>,
    },
    #[error("{op}: invalid parameters: {reason}")]
    Params { op: String, reason: String },
    #[error("{op}: expected {expected}, got {found}")]
    Type {
        op: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Op(#[from] OpError),
    #[error(transparent)]
    Prov(#[from] ProvError),
}

fn join_issues(issues: &[ValidationIssue]) -> String {
    issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl PipelineError {
    /// The innermost error, looking through nested step failures.
    pub fn root_cause(&self) -> &PipelineError {
        match self {
            PipelineError::StepFailure { source, .. } => source.root_cause(),
            other => other,
        }
    }
}

/// A validated pipeline with instantiated operations.
pub struct Pipeline {
    spec: PipelineSpec,
    ops: Vec<Arc<dyn Operation>>,
    descriptor: OperationDescriptor,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline").field("spec", &self.spec).finish_non_exhaustive()
    }
}

impl Pipeline {
    /// Validate `spec` and instantiate its steps. Sub-pipelines listed in
    /// `spec.pipelines` are registered first, in a private copy of `registry`.
    pub fn compile(spec: &PipelineSpec, registry: &Registry) -> Result<Self, PipelineError> {
        let local;
        let registry = if spec.pipelines.is_empty() {
            registry
        } else {
            let mut r = registry.clone();
            for sub in &spec.pipelines {
                r.register_pipeline(sub)?;
            }
            local = r;
            &local
        };
        let issues = validate_pipeline(spec, registry);
        if !issues.is_empty() {
            return Err(PipelineError::Invalid(issues));
        }
        let ops = spec
            .steps
            .iter()
            .enumerate()
            .map(|(index, step)| {
                registry
                    .instantiate(&step.op, &step.params, step.outputs.len())
                    .map_err(|e| PipelineError::StepFailure {
                        index,
                        op: step.op.clone(),
                        source: Box::new(e),
                    })
            })
            .collect::<Result<_, _>>()?;
        let mut config = BTreeMap::new();
        config.insert("steps".to_string(), Scalar::Int(spec.steps.len() as i64));
        Ok(Self {
            spec: spec.clone(),
            ops,
            descriptor: OperationDescriptor::new(spec.name.clone(), config),
        })
    }

    /// Read a JSON config and compile it; relative paths in parameters
    /// resolve against the config file's directory.
    pub fn load(path: &Path, registry: &Registry) -> Result<Self, PipelineError> {
        let spec = PipelineSpec::load(path)?;
        let mut registry = registry.clone();
        if let Some(dir) = path.parent() {
            registry.set_base_dir(dir);
        }
        Self::compile(&spec, &registry)
    }

    pub fn spec(&self) -> &PipelineSpec {
        &self.spec
    }

    /// Run the pipeline. Every declared input must be present in `inputs`.
    pub fn run(&self, inputs: Slots, tracer: Option<&mut Tracer>) -> Result<Slots, PipelineError> {
        let mut ctx = Context { tracer, scope: None };
        self.run_scoped(inputs, &mut ctx)
    }

    fn run_scoped(&self, mut slots: Slots, ctx: &mut Context<'_>) -> Result<Slots, PipelineError> {
        for key in &self.spec.inputs {
            if !slots.contains_key(key) {
                return Err(PipelineError::MissingInput(key.clone()));
            }
        }
        slots.retain(|k, _| self.spec.inputs.contains(k));

        for (index, (step, op)) in self.spec.steps.iter().zip(&self.ops).enumerate() {
            let inputs: Vec<Vec<Value>> = step.inputs.iter().map(|k| slots[k].clone()).collect();
            let out = execute(op.as_ref(), &inputs, step.outputs.len(), ctx).map_err(|e| PipelineError::StepFailure {
                index,
                op: step.op.clone(),
                source: Box::new(e),
            })?;
            if out.len() != step.outputs.len() {
                return Err(PipelineError::StepFailure {
                    index,
                    op: step.op.clone(),
                    source: Box::new(PipelineError::Config(format!(
                        "operation returned {} slots for {} outputs",
                        out.len(),
                        step.outputs.len()
                    ))),
                });
            }
            for (key, values) in step.outputs.iter().zip(out) {
                slots.insert(key.clone(), values);
            }
        }
        Ok(self
            .spec
            .outputs
            .iter()
            .map(|k| (k.clone(), slots[k].clone()))
            .collect())
    }
}

fn ids(values: &[Vec<Value>]) -> Vec<String> {
    values.iter().flatten().map(|v| v.id().to_owned()).collect()
}

/// Run one operation and trace it as one activity.
fn execute(
    op: &dyn Operation,
    inputs: &[Vec<Value>],
    n_outputs: usize,
    ctx: &mut Context<'_>,
) -> Result<Vec<Vec<Value>>, PipelineError> {
    if op.is_composite() {
        let activity = ctx
            .tracer
            .as_deref_mut()
            .map(|t| t.start_composite(op.descriptor(), ctx.scope.as_deref()));
        let mut inner = Context {
            tracer: ctx.tracer.as_deref_mut(),
            scope: activity.clone(),
        };
        let out = op.run(inputs, &mut inner)?;
        if let (Some(t), Some(a)) = (ctx.tracer.as_deref_mut(), activity) {
            t.finish_composite(&a, &ids(inputs), &ids(&out.slots))?;
        }
        return Ok(out.slots);
    }

    let out = match op.mode() {
        Mode::Batch => op.run(inputs, ctx)?,
        Mode::PerItem => {
            // an empty input still yields one (empty) slot per output
            let mut acc = OpOutput {
                slots: vec![Vec::new(); n_outputs],
                derivations: Vec::new(),
            };
            for item in inputs.iter().flatten() {
                let one = op.run(&[vec![item.clone()]], ctx)?;
                if one.slots.len() != n_outputs {
                    return Err(PipelineError::Config(format!(
                        "operation returned {} slots for {} outputs",
                        one.slots.len(),
                        n_outputs
                    )));
                }
                for (slot, values) in acc.slots.iter_mut().zip(one.slots) {
                    slot.extend(values);
                }
                acc.derivations.extend(one.derivations);
            }
            acc
        }
    };
    if let Some(t) = ctx.tracer.as_deref_mut() {
        let activity = t.start_activity(op.descriptor(), ctx.scope.as_deref());
        for d in &out.derivations {
            if d.outputs.is_empty() {
                continue;
            }
            if d.detail {
                t.record_detail(&activity, &d.sources, &d.outputs)?;
            } else {
                t.record(&activity, &d.sources, &d.outputs)?;
            }
        }
    }
    Ok(out.slots)
}

impl Operation for Pipeline {
    fn descriptor(&self) -> &OperationDescriptor {
        &self.descriptor
    }

    fn mode(&self) -> Mode {
        Mode::Batch
    }

    fn is_composite(&self) -> bool {
        true
    }

    fn run(&self, inputs: &[Vec<Value>], ctx: &mut Context<'_>) -> Result<OpOutput, PipelineError> {
        let slots: Slots = self.spec.inputs.iter().cloned().zip(inputs.iter().cloned()).collect();
        let mut out = self.run_scoped(slots, ctx)?;
        Ok(OpOutput {
            slots: self
                .spec
                .outputs
                .iter()
                .map(|k| out.remove(k).unwrap_or_default())
                .collect(),
            derivations: Vec::new(),
        })
    }
}

/// Compile and run `spec` in one call.
pub fn run_pipeline(
    spec: &PipelineSpec,
    registry: &Registry,
    inputs: Slots,
    tracer: Option<&mut Tracer>,
) -> Result<Slots, PipelineError> {
    Pipeline::compile(spec, registry)?.run(inputs, tracer)
}
