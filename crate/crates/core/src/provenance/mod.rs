//! Provenance tracing.
//!
//! A [`Tracer`] accumulates, at a chosen [`VerbosityLevel`], which operation
//! run produced which data item from which inputs. [`build_graph`] turns the
//! records into a [`ProvGraph`] using the PROV-O vocabulary (entities,
//! activities, `used`, `wasGeneratedBy`, `wasDerivedFrom`, `wasInformedBy`),
//! and [`export`] serializes that graph as PROV-JSON or Graphviz dot.
//!
//! Nested pipelines show up as composite activities. At [`VerbosityLevel::Steps`]
//! a composite is collapsed into a single activity whose outputs are derived
//! from the composite inputs they actually depend on; at
//! [`VerbosityLevel::Full`] its inner activities are kept in a sub-graph.

pub mod export;

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use indexmap::{IndexMap, IndexSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{new_id, Scalar};

pub use export::{export_prov, parse_prov_json, ExportFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerbosityLevel {
    None,
    Steps,
    Full,
}

impl std::str::FromStr for VerbosityLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "steps" => Ok(Self::Steps),
            "full" => Ok(Self::Full),
            other => Err(format!("unknown verbosity level {other:?}")),
        }
    }
}

/// Identity and configuration of an operation instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationDescriptor {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub config: BTreeMap<String, Scalar>,
}

impl OperationDescriptor {
    pub fn new(name: impl Into<String>, config: BTreeMap<String, Scalar>) -> Self {
        Self {
            id: new_id(),
            name: name.into(),
            config,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub data_item_id: String,
    pub op_id: String,
    pub activity_id: String,
    pub source_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProvError {
    #[error("data item {0} is recorded as derived from itself")]
    SelfDerivation(String),
    #[error("record without outputs")]
    NoOutputs,
    #[error("unknown activity {0}")]
    UnknownActivity(String),
    #[error("provenance graph contains a cycle")]
    CycleDetected,
    #[error("entity {0} was generated by more than one activity")]
    ConflictingGeneration(String),
    #[error("cannot merge a {other:?} trace into a {this:?} trace")]
    LevelMismatch {
        this: VerbosityLevel,
        other: VerbosityLevel,
    },
    #[error("malformed PROV-JSON: {0}")]
    MalformedJson(String),
}

#[derive(Debug, Clone, PartialEq)]
struct ActivityEntry {
    id: String,
    op: OperationDescriptor,
    scope: Option<String>,
    composite: bool,
}

/// Append-only provenance store.
///
/// Independent tracers (one per worker or per document) can be combined with
/// [`Tracer::merge`]; records are keyed by ids so merge order does not change
/// the resulting graph up to node ordering.
#[derive(Debug, Clone)]
pub struct Tracer {
    level: VerbosityLevel,
    activities: Vec<ActivityEntry>,
    records: Vec<ProvenanceRecord>,
    /// scope of every activity seen so far, kept or not
    scope_of: HashMap<String, Option<String>>,
    /// records hidden inside a collapsed top-level composite, by composite id
    pending: HashMap<String, Vec<ProvenanceRecord>>,
    log: Vec<Event>,
}

pub fn begin_trace(level: VerbosityLevel) -> Tracer {
    Tracer::new(level)
}

impl Tracer {
    pub fn new(level: VerbosityLevel) -> Self {
        Self {
            level,
            activities: Vec::new(),
            records: Vec::new(),
            scope_of: HashMap::new(),
            pending: HashMap::new(),
            log: Vec::new(),
        }
    }

    pub fn level(&self) -> VerbosityLevel {
        self.level
    }

    pub fn records(&self) -> &[ProvenanceRecord] {
        &self.records
    }

    /// Ids and operations of the activities kept at this level.
    pub fn activities(&self) -> impl Iterator<Item = (&str, &OperationDescriptor)> {
        self.activities.iter().map(|a| (a.id.as_str(), &a.op))
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty() && self.activities.is_empty()
    }

    fn keeps(&self, scope: Option<&str>) -> bool {
        match self.level {
            VerbosityLevel::None => false,
            VerbosityLevel::Steps => scope.is_none(),
            VerbosityLevel::Full => true,
        }
    }

    /// Outermost composite enclosing `activity`, if any.
    fn root_composite(&self, activity: &str) -> Option<String> {
        let mut root = None;
        let mut cur = self.scope_of.get(activity).cloned().flatten();
        while let Some(scope) = cur {
            cur = self.scope_of.get(&scope).cloned().flatten();
            root = Some(scope);
        }
        root
    }

    fn open(&mut self, op: &OperationDescriptor, scope: Option<&str>, composite: bool) -> String {
        let id = new_id();
        self.open_with_id(id.clone(), op, scope, composite);
        id
    }

    fn open_with_id(
        &mut self,
        id: String,
        op: &OperationDescriptor,
        scope: Option<&str>,
        composite: bool,
    ) {
        if self.level == VerbosityLevel::None {
            return;
        }
        if self.level == VerbosityLevel::Full {
            self.log.push(Event::Open {
                id: id.clone(),
                op: op.clone(),
                scope: scope.map(str::to_owned),
                composite,
            });
        }
        self.scope_of.insert(id.clone(), scope.map(str::to_owned));
        if self.keeps(scope) {
            self.activities.push(ActivityEntry {
                id: id.clone(),
                op: op.clone(),
                scope: scope.map(str::to_owned),
                composite: composite && self.level == VerbosityLevel::Full,
            });
        }
    }

    /// Open one invocation of `op`. Returns the activity id to record against.
    pub fn start_activity(&mut self, op: &OperationDescriptor, scope: Option<&str>) -> String {
        self.open(op, scope, false)
    }

    /// Open a composite activity (a nested pipeline run).
    pub fn start_composite(&mut self, op: &OperationDescriptor, scope: Option<&str>) -> String {
        self.open(op, scope, true)
    }

    /// Record that every id in `outputs` was produced by `activity` from `sources`.
    pub fn record(
        &mut self,
        activity: &str,
        sources: &[String],
        outputs: &[String],
    ) -> Result<(), ProvError> {
        self.record_inner(activity, sources, outputs, false)
    }

    /// Like [`Tracer::record`] for fine-grained items such as attributes,
    /// which are only traced at [`VerbosityLevel::Full`].
    pub fn record_detail(
        &mut self,
        activity: &str,
        sources: &[String],
        outputs: &[String],
    ) -> Result<(), ProvError> {
        self.record_inner(activity, sources, outputs, true)
    }

    fn record_inner(
        &mut self,
        activity: &str,
        sources: &[String],
        outputs: &[String],
        detail: bool,
    ) -> Result<(), ProvError> {
        if self.level == VerbosityLevel::None || (detail && self.level != VerbosityLevel::Full) {
            return Ok(());
        }
        if outputs.is_empty() {
            return Err(ProvError::NoOutputs);
        }
        if let Some(o) = outputs.iter().find(|o| sources.contains(o)) {
            return Err(ProvError::SelfDerivation(o.clone()));
        }
        let scope = self
            .scope_of
            .get(activity)
            .ok_or_else(|| ProvError::UnknownActivity(activity.to_owned()))?
            .clone();
        if self.level == VerbosityLevel::Full {
            self.log.push(Event::Record {
                activity: activity.to_owned(),
                sources: sources.to_vec(),
                outputs: outputs.to_vec(),
                detail,
            });
        }
        let op_id = match self.activities.iter().rev().find(|a| a.id == activity) {
            Some(a) => a.op.id.clone(),
            None => String::new(),
        };
        let recs = outputs.iter().map(|o| ProvenanceRecord {
            data_item_id: o.clone(),
            op_id: op_id.clone(),
            activity_id: activity.to_owned(),
            source_ids: sources.to_vec(),
        });
        if self.keeps(scope.as_deref()) {
            self.records.extend(recs);
        } else if let Some(root) = self.root_composite(activity) {
            self.pending.entry(root).or_default().extend(recs);
        }
        Ok(())
    }

    /// Open an activity for `op` and record one derivation in a single call.
    pub fn record_op(
        &mut self,
        op: &OperationDescriptor,
        sources: &[String],
        outputs: &[String],
        scope: Option<&str>,
    ) -> Result<String, ProvError> {
        let activity = self.start_activity(op, scope);
        self.record(&activity, sources, outputs)?;
        Ok(activity)
    }

    /// Close a composite activity.
    ///
    /// When the composite is collapsed, each output is recorded as derived
    /// from the composite inputs it reaches through the hidden inner records.
    pub fn finish_composite(
        &mut self,
        composite: &str,
        sources: &[String],
        outputs: &[String],
    ) -> Result<(), ProvError> {
        if self.level == VerbosityLevel::Full {
            self.log.push(Event::Finish {
                composite: composite.to_owned(),
                sources: sources.to_vec(),
                outputs: outputs.to_vec(),
            });
        }
        if self.level != VerbosityLevel::Steps {
            return Ok(());
        }
        let Some(scope) = self.scope_of.get(composite) else {
            return Err(ProvError::UnknownActivity(composite.to_owned()));
        };
        if scope.is_some() {
            // inner composites share the pending buffer of their root
            return Ok(());
        }
        let hidden = self.pending.remove(composite).unwrap_or_default();
        let mut derived_from: HashMap<&str, Vec<&str>> = HashMap::new();
        for r in &hidden {
            derived_from
                .entry(r.data_item_id.as_str())
                .or_default()
                .extend(r.source_ids.iter().map(String::as_str));
        }
        let inputs: HashSet<&str> = sources.iter().map(String::as_str).collect();

        let mut lineage: Vec<(String, Vec<String>)> = Vec::new();
        for out in outputs {
            if inputs.contains(out.as_str()) {
                continue;
            }
            let mut reached = Vec::new();
            let mut seen = HashSet::new();
            let mut queue = VecDeque::from([out.as_str()]);
            while let Some(id) = queue.pop_front() {
                for &src in derived_from.get(id).map(Vec::as_slice).unwrap_or(&[]) {
                    if !seen.insert(src) {
                        continue;
                    }
                    if inputs.contains(src) {
                        reached.push(src.to_owned());
                    } else {
                        queue.push_back(src);
                    }
                }
            }
            // keep the order in which inputs were given
            reached.sort_by_key(|s| sources.iter().position(|x| x == s));
            lineage.push((out.clone(), reached));
        }
        for (out, srcs) in lineage {
            self.record(composite, &srcs, &[out])?;
        }
        Ok(())
    }

    /// Append every activity and record of `other`.
    pub fn merge(&mut self, other: Tracer) -> Result<(), ProvError> {
        if other.level != self.level {
            return Err(ProvError::LevelMismatch {
                this: self.level,
                other: other.level,
            });
        }
        self.activities.extend(other.activities);
        self.records.extend(other.records);
        self.scope_of.extend(other.scope_of);
        for (k, v) in other.pending {
            self.pending.entry(k).or_default().extend(v);
        }
        self.log.extend(other.log);
        Ok(())
    }

    /// The same run as it would have been traced at `level`, with the same
    /// activity and data ids. Only a full-level trace can be lowered.
    pub fn project(&self, level: VerbosityLevel) -> Result<Tracer, ProvError> {
        if level == self.level {
            return Ok(self.clone());
        }
        if self.level != VerbosityLevel::Full {
            return Err(ProvError::LevelMismatch {
                this: self.level,
                other: level,
            });
        }
        let mut out = Tracer::new(level);
        for ev in &self.log {
            match ev {
                Event::Open {
                    id,
                    op,
                    scope,
                    composite,
                } => out.open_with_id(id.clone(), op, scope.as_deref(), *composite),
                Event::Record {
                    activity,
                    sources,
                    outputs,
                    detail,
                } => out.record_inner(activity, sources, outputs, *detail)?,
                Event::Finish {
                    composite,
                    sources,
                    outputs,
                } => out.finish_composite(composite, sources, outputs)?,
            }
        }
        Ok(out)
    }
}

/// Calls received by a full-level tracer, kept so the same run can be
/// viewed at a lower level with identical ids.
#[derive(Debug, Clone, PartialEq)]
enum Event {
    Open {
        id: String,
        op: OperationDescriptor,
        scope: Option<String>,
        composite: bool,
    },
    Record {
        activity: String,
        sources: Vec<String>,
        outputs: Vec<String>,
        detail: bool,
    },
    Finish {
        composite: String,
        sources: Vec<String>,
        outputs: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityNode {
    pub id: String,
    pub op_id: String,
    pub name: String,
    pub config: BTreeMap<String, Scalar>,
    pub composite: bool,
}

/// PROV graph of one scope, with composite activities expanded into
/// `sub_graphs`.
///
/// Edge tuples are `(subject, object)` in PROV reading order:
/// `used = (activity, entity)`, `generated = (entity, activity)`,
/// `derived = (generated entity, used entity)`,
/// `informed = (informed activity, informant activity)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProvGraph {
    pub entities: IndexSet<String>,
    pub activities: IndexMap<String, ActivityNode>,
    pub used: Vec<(String, String)>,
    pub generated: Vec<(String, String)>,
    pub derived: Vec<(String, String)>,
    pub informed: Vec<(String, String)>,
    pub sub_graphs: IndexMap<String, ProvGraph>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GraphCounts {
    pub entities: usize,
    pub activities: usize,
    pub used: usize,
    pub generated: usize,
    pub derived: usize,
    pub informed: usize,
}

impl ProvGraph {
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.activities.is_empty()
    }

    /// Merge every sub-graph into one graph. Entities shared between scopes
    /// appear once.
    pub fn flatten(&self) -> ProvGraph {
        let mut flat = ProvGraph::default();
        self.flatten_into(&mut flat);
        flat
    }

    fn flatten_into(&self, flat: &mut ProvGraph) {
        flat.entities.extend(self.entities.iter().cloned());
        flat.activities
            .extend(self.activities.iter().map(|(k, v)| (k.clone(), v.clone())));
        flat.used.extend(self.used.iter().cloned());
        flat.generated.extend(self.generated.iter().cloned());
        flat.derived.extend(self.derived.iter().cloned());
        flat.informed.extend(self.informed.iter().cloned());
        for sub in self.sub_graphs.values() {
            sub.flatten_into(flat);
        }
    }

    pub fn counts(&self) -> GraphCounts {
        let f = self.flatten();
        GraphCounts {
            entities: f.entities.len(),
            activities: f.activities.len(),
            used: f.used.len(),
            generated: f.generated.len(),
            derived: f.derived.len(),
            informed: f.informed.len(),
        }
    }

    /// Deepest chain of nested composite activities (0 when flat).
    pub fn nesting_depth(&self) -> usize {
        self.sub_graphs
            .values()
            .map(|g| 1 + g.nesting_depth())
            .max()
            .unwrap_or(0)
    }

    /// Topological order of entity and activity ids, later items first
    /// pointing at earlier ones. Fails on a cycle.
    pub fn topological_order(&self) -> Result<Vec<String>, ProvError> {
        use petgraph::graphmap::DiGraphMap;

        let flat = self.flatten();
        let mut ids: Vec<&str> = flat.entities.iter().map(String::as_str).collect();
        ids.extend(flat.activities.keys().map(String::as_str));
        let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, &s)| (s, i)).collect();

        let mut g = DiGraphMap::<usize, ()>::new();
        for i in 0..ids.len() {
            g.add_node(i);
        }
        let edges = flat
            .used
            .iter()
            .chain(&flat.generated)
            .chain(&flat.derived)
            .chain(&flat.informed);
        for (a, b) in edges {
            match (index.get(a.as_str()), index.get(b.as_str())) {
                (Some(&x), Some(&y)) => {
                    g.add_edge(x, y, ());
                }
                _ => return Err(ProvError::UnknownActivity(format!("{a} -> {b}"))),
            }
        }
        let order = petgraph::algo::toposort(&g, None).map_err(|_| ProvError::CycleDetected)?;
        Ok(order.into_iter().map(|i| ids[i].to_owned()).collect())
    }
}

/// Node labels and edges of a graph with ids replaced by positions, used to
/// compare graphs whose ids were generated independently.
#[derive(Debug, PartialEq, Eq)]
struct Canonical {
    entities: Vec<usize>,
    activities: Vec<(usize, String)>,
    edges: Vec<(u8, usize, usize)>,
    subs: Vec<(usize, Canonical)>,
}

type NodeLabel = String;

impl ProvGraph {
    fn node_labels(&self) -> (Vec<String>, HashMap<String, usize>, Vec<NodeLabel>) {
        let flat = self.flatten();
        let mut ids: Vec<String> = flat.entities.iter().cloned().collect();
        let mut labels: Vec<NodeLabel> = vec!["entity".to_string(); ids.len()];
        for a in flat.activities.values() {
            ids.push(a.id.clone());
            labels.push(format!("{}|{:?}|{}", a.name, a.config, a.composite));
        }
        let index = ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        (ids, index, labels)
    }

    fn canonical(&self, index: &HashMap<String, usize>, labels: &[NodeLabel]) -> Canonical {
        let mut edges = Vec::new();
        for (kind, list) in [&self.used, &self.generated, &self.derived, &self.informed].into_iter().enumerate() {
            edges.extend(list.iter().map(|(a, b)| (kind as u8, index[a], index[b])));
        }
        edges.sort_unstable();
        let mut entities: Vec<usize> = self.entities.iter().map(|e| index[e]).collect();
        entities.sort_unstable();
        let mut activities: Vec<(usize, String)> =
            self.activities.keys().map(|a| (index[a], labels[index[a]].clone())).collect();
        activities.sort_unstable();
        let mut subs: Vec<(usize, Canonical)> =
            self.sub_graphs.iter().map(|(k, g)| (index[k], g.canonical(index, labels))).collect();
        subs.sort_by_key(|(k, _)| *k);
        Canonical {
            entities,
            activities,
            edges,
            subs,
        }
    }

    /// Whether the two graphs are equal up to a renaming of ids.
    ///
    /// Graphs built from runs that record in the same order are compared by
    /// position, which is exact and cheap. Otherwise the flattened graphs
    /// are handed to a VF2 matcher that respects node and edge kinds.
    pub fn is_isomorphic(&self, other: &ProvGraph) -> bool {
        if self.counts() != other.counts() || self.nesting_depth() != other.nesting_depth() {
            return false;
        }
        let (_, ia, la) = self.node_labels();
        let (_, ib, lb) = other.node_labels();
        if la == lb && self.canonical(&ia, &la) == other.canonical(&ib, &lb) {
            return true;
        }
        let (ga, gb) = (self.petgraph(), other.petgraph());
        petgraph::algo::is_isomorphic_matching(&ga, &gb, |a, b| a == b, |a, b| a == b)
    }

    fn petgraph(&self) -> petgraph::Graph<NodeLabel, u8> {
        let (ids, index, labels) = self.node_labels();
        let flat = self.flatten();
        let mut g = petgraph::Graph::with_capacity(ids.len(), 0);
        let nodes: Vec<_> = labels.into_iter().map(|l| g.add_node(l)).collect();
        for (kind, list) in [&flat.used, &flat.generated, &flat.derived, &flat.informed].into_iter().enumerate() {
            let unique: HashSet<&(String, String)> = list.iter().collect();
            for (a, b) in unique {
                g.add_edge(nodes[index[a]], nodes[index[b]], kind as u8);
            }
        }
        g
    }
}

fn push_unique(v: &mut Vec<(String, String)>, seen: &mut HashSet<(String, String)>, e: (String, String)) {
    if seen.insert(e.clone()) {
        v.push(e);
    }
}

/// Turn the tracer's records into a PROV graph.
pub fn build_graph(tracer: &Tracer) -> Result<ProvGraph, ProvError> {
    let mut generator: HashMap<&str, &str> = HashMap::new();
    for r in &tracer.records {
        if let Some(prev) = generator.insert(&r.data_item_id, &r.activity_id) {
            if prev != r.activity_id {
                return Err(ProvError::ConflictingGeneration(r.data_item_id.clone()));
            }
        }
    }
    let mut by_activity: HashMap<&str, Vec<&ProvenanceRecord>> = HashMap::new();
    for r in &tracer.records {
        by_activity.entry(&r.activity_id).or_default().push(r);
    }

    let graph = build_scope(tracer, None, &by_activity, &generator);
    graph.topological_order()?;
    Ok(graph)
}

fn build_scope(
    tracer: &Tracer,
    scope: Option<&str>,
    by_activity: &HashMap<&str, Vec<&ProvenanceRecord>>,
    generator: &HashMap<&str, &str>,
) -> ProvGraph {
    let mut g = ProvGraph::default();
    let mut seen_used = HashSet::new();
    let mut seen_derived = HashSet::new();
    let mut seen_generated = HashSet::new();
    let mut seen_informed = HashSet::new();

    for act in tracer.activities.iter().filter(|a| a.scope.as_deref() == scope) {
        g.activities.insert(
            act.id.clone(),
            ActivityNode {
                id: act.id.clone(),
                op_id: act.op.id.clone(),
                name: act.op.name.clone(),
                config: act.op.config.clone(),
                composite: act.composite,
            },
        );
        for r in by_activity.get(act.id.as_str()).map(Vec::as_slice).unwrap_or(&[]) {
            g.entities.insert(r.data_item_id.clone());
            push_unique(
                &mut g.generated,
                &mut seen_generated,
                (r.data_item_id.clone(), act.id.clone()),
            );
            for src in &r.source_ids {
                g.entities.insert(src.clone());
                push_unique(&mut g.used, &mut seen_used, (act.id.clone(), src.clone()));
                push_unique(
                    &mut g.derived,
                    &mut seen_derived,
                    (r.data_item_id.clone(), src.clone()),
                );
                if let Some(&informant) = generator.get(src.as_str()) {
                    if informant != act.id {
                        push_unique(
                            &mut g.informed,
                            &mut seen_informed,
                            (act.id.clone(), informant.to_owned()),
                        );
                    }
                }
            }
        }
        if act.composite {
            let sub = build_scope(tracer, Some(&act.id), by_activity, generator);
            g.sub_graphs.insert(act.id.clone(), sub);
        }
    }
    g
}
