//! Lowers a job spec into a workflow DAG.
//!
//! Task decomposition is a deterministic keyword match against a capability
//! lexicon. Hints are mapped one-to-one; a description without hints is
//! expanded through whole-job templates. [`Planner`] is the seam for other
//! decomposers.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::library::{AgentLibrary, AgentSpec, ArgKind};
use crate::model::{validate_dag, DagEdge, DagNode, DataItem, JobSpec, MediaKind, NodeId, Origin, WorkflowDag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum KindList {
    One(MediaKind),
    Many(Vec<MediaKind>),
}

impl KindList {
    fn into_vec(self) -> Vec<MediaKind> {
        match self {
            KindList::One(k) => vec![k],
            KindList::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskScope {
    /// One node per input item.
    #[default]
    Item,
    /// One node for the whole job.
    Job,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    keywords: Vec<String>,
    capability: String,
    consumes: KindList,
    produces: MediaKind,
    #[serde(default)]
    defaults: BTreeMap<String, Value>,
    #[serde(default)]
    expansion: Option<Vec<String>>,
    #[serde(default)]
    scope: TaskScope,
    #[serde(default)]
    work_scale: Option<f64>,
    #[serde(default)]
    min_chunk: Option<f64>,
    #[serde(default)]
    max_paths: Option<u32>,
    #[serde(default)]
    quality_ceiling: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexiconEntry {
    pub keywords: BTreeSet<String>,
    pub capability: String,
    pub consumes: Vec<MediaKind>,
    pub produces: MediaKind,
    pub defaults: BTreeMap<String, Value>,
    /// Present on whole-job templates.
    pub expansion: Option<Vec<String>>,
    pub scope: TaskScope,
    pub work_scale: f64,
    pub min_chunk: Option<f64>,
    pub max_paths: u32,
    pub quality_ceiling: Option<u32>,
}

impl LexiconEntry {
    pub fn is_template(&self) -> bool {
        self.expansion.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapabilityLexicon {
    entries: Vec<LexiconEntry>,
}

#[derive(Debug, Error, PartialEq)]
pub enum LexiconError {
    #[error("lexicon schema error: {0}")]
    Schema(String),
    #[error("lexicon entry `{0}`: {1}")]
    Invalid(String, String),
    #[error("capability `{0}` is not in the agent library")]
    UnknownCapability(String),
}

fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(|t| t.to_lowercase()).collect()
}

impl CapabilityLexicon {
    pub fn from_json(text: &str) -> Result<Self, LexiconError> {
        let raw: Vec<RawEntry> = serde_json::from_str(text).map_err(|e| LexiconError::Schema(e.to_string()))?;
        let mut seen = HashSet::new();
        let mut entries = Vec::with_capacity(raw.len());
        for r in raw {
            if !seen.insert(r.capability.clone()) {
                return Err(LexiconError::Invalid(r.capability, "duplicate capability".into()));
            }
            let keywords: BTreeSet<String> = r.keywords.iter().flat_map(|k| tokens(k)).collect();
            if keywords.is_empty() {
                return Err(LexiconError::Invalid(r.capability, "empty keyword set".into()));
            }
            let consumes = r.consumes.into_vec();
            if consumes.is_empty() {
                return Err(LexiconError::Invalid(r.capability, "consumes nothing".into()));
            }
            if let Some(c) = r.min_chunk {
                if !(c.is_finite() && c > 0.0) {
                    return Err(LexiconError::Invalid(r.capability, "min_chunk must be > 0".into()));
                }
            }
            let work_scale = r.work_scale.unwrap_or(1.0);
            if !(work_scale.is_finite() && work_scale > 0.0) {
                return Err(LexiconError::Invalid(r.capability, "work_scale must be > 0".into()));
            }
            if r.max_paths == Some(0) {
                return Err(LexiconError::Invalid(r.capability, "max_paths must be >= 1".into()));
            }
            entries.push(LexiconEntry {
                keywords,
                capability: r.capability,
                consumes,
                produces: r.produces,
                defaults: r.defaults,
                expansion: r.expansion,
                scope: r.scope,
                work_scale,
                min_chunk: r.min_chunk,
                max_paths: r.max_paths.unwrap_or(1),
                quality_ceiling: r.quality_ceiling,
            });
        }
        let lex = Self { entries };
        for t in lex.templates() {
            for cap in t.expansion.as_deref().unwrap_or_default() {
                if lex.capability(cap).is_none() {
                    return Err(LexiconError::Invalid(
                        t.capability.clone(),
                        format!("expansion names unknown capability `{cap}`"),
                    ));
                }
            }
        }
        Ok(lex)
    }

    /// Every non-template capability must exist in the agent library.
    pub fn check_against(&self, library: &AgentLibrary) -> Result<(), LexiconError> {
        for e in self.capabilities() {
            if library.agent(&e.capability).is_none() {
                return Err(LexiconError::UnknownCapability(e.capability.clone()));
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    /// Non-template entries.
    pub fn capabilities(&self) -> impl Iterator<Item = &LexiconEntry> {
        self.entries.iter().filter(|e| !e.is_template())
    }

    pub fn templates(&self) -> impl Iterator<Item = &LexiconEntry> {
        self.entries.iter().filter(|e| e.is_template())
    }

    pub fn capability(&self, tag: &str) -> Option<&LexiconEntry> {
        self.capabilities().find(|e| e.capability == tag)
    }

    /// Highest-overlap entry among `candidates`, or an error on zero or tied scores.
    fn best_match<'a>(
        text: &str,
        candidates: impl Iterator<Item = &'a LexiconEntry>,
    ) -> Result<&'a LexiconEntry, PlanError> {
        let words = tokens(text);
        let mut best: Vec<&LexiconEntry> = Vec::new();
        let mut best_score = 0;
        for e in candidates {
            let score = e.keywords.intersection(&words).count();
            if score == 0 {
                continue;
            }
            if score > best_score {
                best_score = score;
                best.clear();
            }
            if score == best_score {
                best.push(e);
            }
        }
        match best.as_slice() {
            [] => Err(PlanError::UnmappableTask(text.to_string())),
            [one] => Ok(one),
            many => Err(PlanError::AmbiguousTask {
                task: text.to_string(),
                candidates: many.iter().map(|e| e.capability.clone()).collect(),
            }),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("task `{0}` matches no capability")]
    UnmappableTask(String),
    #[error("task `{task}` matches {candidates:?} equally")]
    AmbiguousTask { task: String, candidates: Vec<String> },
    #[error("task `{0}` has no satisfiable input")]
    DisconnectedTask(String),
    #[error("capability `{capability}`: {message}")]
    KindConflict { capability: String, message: String },
    #[error("capability `{0}` missing from lexicon")]
    UnknownCapability(String),
    #[error("cannot bind argument `{argument}` for {capability}")]
    SchemaBindingError { capability: String, argument: String },
    #[error("planned DAG is invalid: {0}")]
    InvalidDag(String),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub text: String,
    pub capability: String,
    pub origin: Origin,
}

/// Maps each hint to one capability, or expands the description through a
/// template when there are no hints.
pub fn decompose_job(spec: &JobSpec, lexicon: &CapabilityLexicon) -> Result<Vec<Task>, PlanError> {
    if spec.task_hints.is_empty() {
        let template = CapabilityLexicon::best_match(&spec.description, lexicon.templates())?;
        return Ok(template
            .expansion
            .iter()
            .flatten()
            .map(|cap| Task { text: spec.description.clone(), capability: cap.clone(), origin: Origin::Inferred })
            .collect());
    }
    spec.task_hints
        .iter()
        .map(|hint| {
            let e = CapabilityLexicon::best_match(hint, lexicon.capabilities())?;
            Ok(Task { text: hint.clone(), capability: e.capability.clone(), origin: Origin::Hinted })
        })
        .collect()
}

/// Appends the capabilities of the template matching the job description that
/// the hinted tasks do not already cover. Jobs whose description matches no
/// template are returned unchanged.
pub fn complete_with_template(
    spec: &JobSpec,
    lexicon: &CapabilityLexicon,
    mut tasks: Vec<Task>,
) -> Result<Vec<Task>, PlanError> {
    if spec.task_hints.is_empty() {
        return Ok(tasks);
    }
    let template = match CapabilityLexicon::best_match(&spec.description, lexicon.templates()) {
        Ok(t) => t,
        Err(PlanError::UnmappableTask(_)) => return Ok(tasks),
        Err(e) => return Err(e),
    };
    for cap in template.expansion.iter().flatten() {
        if !tasks.iter().any(|t| &t.capability == cap) {
            tasks.push(Task { text: template.capability.clone(), capability: cap.clone(), origin: Origin::Inferred });
        }
    }
    Ok(tasks)
}

/// Builds the dataflow DAG. Per-item tasks get one node per input item whose
/// lane can feed them; an edge runs from an earlier task's node to a later
/// one when the producer's output kind is among the consumer's input kinds
/// and both are in the same lane or one of them is job-wide.
pub fn infer_edges(tasks: &[Task], inputs: &[DataItem], lexicon: &CapabilityLexicon) -> Result<WorkflowDag, PlanError> {
    struct Placed {
        id: NodeId,
        task: usize,
        produces: MediaKind,
        lane: Option<String>,
    }
    let mut nodes: Vec<DagNode> = Vec::new();
    let mut placed: Vec<Placed> = Vec::new();
    let mut edges: Vec<DagEdge> = Vec::new();
    let mut used_ids: HashSet<String> = HashSet::new();
    let total_work: f64 = inputs.iter().map(|i| i.work_units).sum();

    let mut unique_id = |base: String| -> String {
        let mut id = base.clone();
        let mut k = 2;
        while used_ids.contains(&id) {
            id = format!("{base}#{k}");
            k += 1;
        }
        used_ids.insert(id.clone());
        id
    };

    for (ti, task) in tasks.iter().enumerate() {
        let entry = lexicon
            .capability(&task.capability)
            .ok_or_else(|| PlanError::UnknownCapability(task.capability.clone()))?;
        let make_node = |id: String, work: f64, item: Option<String>| DagNode {
            id,
            capability: entry.capability.clone(),
            work_units: work,
            splittable: entry.min_chunk.is_some(),
            min_chunk: entry.min_chunk,
            max_paths: entry.max_paths,
            quality_ceiling: entry.quality_ceiling,
            consumes: entry.consumes.clone(),
            produces: entry.produces,
            origin: task.origin,
            item,
        };
        let feeds = |p: &Placed, lane: Option<&str>| {
            p.task < ti
                && entry.consumes.contains(&p.produces)
                && (p.lane.is_none() || lane.is_none() || p.lane.as_deref() == lane)
        };

        let mut created = 0;
        match entry.scope {
            TaskScope::Item => {
                for item in inputs {
                    if item.work_units <= 0.0 {
                        continue;
                    }
                    let raw = entry.consumes.contains(&item.media_kind);
                    let producers: Vec<(NodeId, MediaKind)> = placed
                        .iter()
                        .filter(|p| feeds(p, Some(&item.id)))
                        .map(|p| (p.id.clone(), p.produces))
                        .collect();
                    if !raw && producers.is_empty() {
                        continue;
                    }
                    let id = unique_id(format!("{}[{}]", entry.capability, item.id));
                    for (from, kind) in producers {
                        edges.push(DagEdge { from, to: id.clone(), kind });
                    }
                    nodes.push(make_node(id.clone(), item.work_units * entry.work_scale, Some(item.id.clone())));
                    placed.push(Placed { id, task: ti, produces: entry.produces, lane: Some(item.id.clone()) });
                    created += 1;
                }
            }
            TaskScope::Job => {
                let raw = inputs.iter().any(|i| i.work_units > 0.0 && entry.consumes.contains(&i.media_kind));
                let producers: Vec<(NodeId, MediaKind)> =
                    placed.iter().filter(|p| feeds(p, None)).map(|p| (p.id.clone(), p.produces)).collect();
                if (raw || !producers.is_empty()) && total_work > 0.0 {
                    let id = unique_id(entry.capability.clone());
                    for (from, kind) in producers {
                        edges.push(DagEdge { from, to: id.clone(), kind });
                    }
                    nodes.push(make_node(id.clone(), total_work * entry.work_scale, None));
                    placed.push(Placed { id, task: ti, produces: entry.produces, lane: None });
                    created += 1;
                }
            }
        }
        if created == 0 {
            return Err(PlanError::DisconnectedTask(task.text.clone()));
        }
    }

    let mut input_kinds: Vec<MediaKind> = inputs.iter().map(|i| i.media_kind).collect();
    input_kinds.sort();
    input_kinds.dedup();
    let dag = WorkflowDag { nodes, edges, input_kinds };
    let report = validate_dag(&dag);
    if !report.is_empty() {
        return Err(PlanError::InvalidDag(format!("{report:?}")));
    }
    Ok(dag)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub node: NodeId,
    pub capability: String,
    pub arguments: BTreeMap<String, Value>,
    pub target: String,
}

fn number(v: f64) -> Value {
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        Value::from(v as i64)
    } else {
        Value::from(v)
    }
}

/// Binds an agent's arguments from the target item's metadata, falling back to
/// lexicon defaults.
pub fn synthesize_tool_call(
    node: &DagNode,
    item: &DataItem,
    agent: &AgentSpec,
    defaults: &BTreeMap<String, Value>,
) -> Result<ToolCall, PlanError> {
    let binding_error =
        |arg: &str| PlanError::SchemaBindingError { capability: agent.capability.clone(), argument: arg.to_string() };
    if node.capability != agent.capability {
        return Err(binding_error("<capability>"));
    }
    let empty = item.work_units <= 0.0;
    let mut arguments = BTreeMap::new();
    for arg in &agent.schema {
        let source = match arg.name.as_str() {
            "file" => Some(Value::from(item.id.clone())),
            "start_time" => Some(Value::from(0)),
            "end_time" | "duration" => Some(number(item.work_units)),
            name => defaults.get(name).cloned(),
        };
        let Some(mut value) = source else {
            if arg.required {
                return Err(binding_error(&arg.name));
            }
            continue;
        };
        let ok = match arg.kind {
            ArgKind::Number => value.is_number(),
            ArgKind::Count => {
                if empty && value.is_u64() {
                    value = Value::from(0);
                }
                value.is_u64()
            }
            ArgKind::Text => value.is_string(),
        };
        if !ok {
            return Err(binding_error(&arg.name));
        }
        arguments.insert(arg.name.clone(), value);
    }
    Ok(ToolCall { node: node.id.clone(), capability: agent.capability.clone(), arguments, target: item.id.clone() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub tasks: Vec<Task>,
    pub dag: WorkflowDag,
    pub tool_calls: Vec<ToolCall>,
}

/// Turns a job spec into a plan. Alternative decomposers implement this.
pub trait Planner {
    fn plan(&self, spec: &JobSpec, lexicon: &CapabilityLexicon, library: &AgentLibrary) -> Result<Plan, PlanError>;
}

/// Keyword-matching planner over the capability lexicon.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexiconPlanner;

impl Planner for LexiconPlanner {
    fn plan(&self, spec: &JobSpec, lexicon: &CapabilityLexicon, library: &AgentLibrary) -> Result<Plan, PlanError> {
        lexicon.check_against(library)?;
        let tasks = decompose_job(spec, lexicon)?;
        let tasks = complete_with_template(spec, lexicon, tasks)?;
        for t in &tasks {
            let entry =
                lexicon.capability(&t.capability).ok_or_else(|| PlanError::UnknownCapability(t.capability.clone()))?;
            let agent =
                library.agent(&t.capability).ok_or_else(|| PlanError::UnknownCapability(t.capability.clone()))?;
            let mut lex_consumes = entry.consumes.clone();
            let mut lib_consumes = agent.consumes.clone();
            lex_consumes.sort();
            lib_consumes.sort();
            if lex_consumes != lib_consumes || entry.produces != agent.produces {
                return Err(PlanError::KindConflict {
                    capability: t.capability.clone(),
                    message: "lexicon and agent library disagree on media kinds".into(),
                });
            }
        }
        let dag = infer_edges(&tasks, &spec.inputs, lexicon)?;

        let mut tool_calls = Vec::new();
        for node in &dag.nodes {
            let entry = lexicon.capability(&node.capability).expect("checked above");
            let agent = library.agent(&node.capability).expect("checked above");
            let targets: Vec<&DataItem> = match &node.item {
                Some(id) => spec.inputs.iter().filter(|i| &i.id == id).collect(),
                None => spec.inputs.iter().collect(),
            };
            for item in targets {
                tool_calls.push(synthesize_tool_call(node, item, agent, &entry.defaults)?);
            }
        }
        Ok(Plan { tasks, dag, tool_calls })
    }
}
