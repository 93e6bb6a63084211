//! Declarative job specification, the workflow DAG intermediate representation
//! and their validation.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optimizer::ConfigPoint;

pub type NodeId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaKind {
    Video,
    Audio,
    Image,
    Text,
    Embedding,
}

impl MediaKind {
    pub const ALL: [MediaKind; 5] =
        [MediaKind::Video, MediaKind::Audio, MediaKind::Image, MediaKind::Text, MediaKind::Embedding];
}

impl fmt::Display for MediaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MediaKind::Video => "video",
            MediaKind::Audio => "audio",
            MediaKind::Image => "image",
            MediaKind::Text => "text",
            MediaKind::Embedding => "embedding",
        };
        f.write_str(s)
    }
}

/// One job input. `work_units` is media specific: seconds for video and
/// audio, a count for frames, tokens for text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataItem {
    pub id: String,
    pub media_kind: MediaKind,
    pub work_units: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Criterion {
    MinCostDollars,
    MinEnergy,
    MinLatency,
    MaxQuality,
}

impl Criterion {
    /// Order used to extend an explicit hierarchy with the criteria it leaves out.
    pub const RESIDUAL_ORDER: [Criterion; 4] =
        [Criterion::MaxQuality, Criterion::MinCostDollars, Criterion::MinEnergy, Criterion::MinLatency];
}

/// Which energy figure the MIN_ENERGY criterion reads.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyScope {
    /// Busy energy of GPU SKUs only.
    #[default]
    Gpu,
    /// Busy energy of every SKU.
    Total,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveHierarchy {
    criteria: Vec<Criterion>,
    pub quality_floor: Option<u32>,
    #[serde(default)]
    pub energy_scope: EnergyScope,
}

impl ObjectiveHierarchy {
    pub fn new(criteria: Vec<Criterion>) -> Result<Self, SpecError> {
        if criteria.is_empty() {
            return Err(SpecError::validation("constraint", "objective hierarchy is empty"));
        }
        let mut seen = HashSet::new();
        for c in &criteria {
            if !seen.insert(*c) {
                return Err(SpecError::validation("constraint", format!("duplicate criterion {c:?}")));
            }
        }
        Ok(Self { criteria, quality_floor: None, energy_scope: EnergyScope::Gpu })
    }

    pub fn with_quality_floor(mut self, floor: Option<u32>) -> Self {
        self.quality_floor = floor;
        self
    }

    pub fn with_energy_scope(mut self, scope: EnergyScope) -> Self {
        self.energy_scope = scope;
        self
    }

    pub fn criteria(&self) -> &[Criterion] {
        &self.criteria
    }

    pub fn primary(&self) -> Criterion {
        self.criteria[0]
    }

    /// The explicit criteria followed by every remaining criterion, used for
    /// tie-breaking before the configuration identifier.
    pub fn full_ranking(&self) -> Vec<Criterion> {
        let mut out = self.criteria.clone();
        for c in Criterion::RESIDUAL_ORDER {
            if !out.contains(&c) {
                out.push(c);
            }
        }
        out
    }

    /// Expands spec-file constraint tokens into a hierarchy.
    pub fn from_tokens(tokens: &[String]) -> Result<Self, SpecError> {
        let mut criteria = Vec::new();
        for token in tokens {
            let expansion: &[Criterion] = match token.as_str() {
                // Energy is what the cost constraint minimizes in the reference evaluation.
                "MIN_COST" => &[Criterion::MinEnergy, Criterion::MinLatency],
                "MIN_DOLLARS" => &[Criterion::MinCostDollars, Criterion::MinLatency],
                "MIN_LATENCY" => &[Criterion::MinLatency, Criterion::MinEnergy],
                "MAX_QUALITY" => &[Criterion::MaxQuality, Criterion::MinLatency],
                other => {
                    return Err(SpecError::validation("constraint", format!("unknown constraint token `{other}`")))
                }
            };
            for c in expansion {
                if !criteria.contains(c) {
                    criteria.push(*c);
                }
            }
        }
        Self::new(criteria)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Declarative,
    Pinned,
}

/// A pinned plan is either embedded in the spec file or a path to a plan file,
/// resolved relative to the spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PinnedPlan {
    Path(String),
    Inline(ConfigPoint),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum ConstraintField {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    description: String,
    #[serde(default)]
    tasks: Vec<String>,
    inputs: Vec<DataItem>,
    constraint: ConstraintField,
    #[serde(default)]
    mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pinned_plan: Option<PinnedPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quality_floor: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    energy_scope: Option<EnergyScope>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobSpec {
    pub description: String,
    pub task_hints: Vec<String>,
    pub inputs: Vec<DataItem>,
    /// Constraint tokens as written in the spec file.
    pub constraint: Vec<String>,
    pub objective: ObjectiveHierarchy,
    pub mode: Mode,
    pub pinned_plan: Option<PinnedPlan>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("validation error at `{path}`: {message}")]
    Validation { path: String, message: String },
}

impl SpecError {
    pub fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        SpecError::Validation { path: path.into(), message: message.into() }
    }
}

pub fn parse_job_spec(text: &str) -> Result<JobSpec, SpecError> {
    let file: SpecFile = serde_json::from_str(text).map_err(|e| SpecError::Schema(e.to_string()))?;

    if file.description.trim().is_empty() {
        return Err(SpecError::validation("description", "must not be empty"));
    }
    if file.inputs.is_empty() {
        return Err(SpecError::validation("inputs", "at least one input is required"));
    }
    let mut ids = HashSet::new();
    for (i, item) in file.inputs.iter().enumerate() {
        if item.id.is_empty() {
            return Err(SpecError::validation(format!("inputs[{i}].id"), "must not be empty"));
        }
        if !ids.insert(item.id.as_str()) {
            return Err(SpecError::validation(format!("inputs[{i}].id"), format!("duplicate input id `{}`", item.id)));
        }
        if !item.work_units.is_finite() || item.work_units < 0.0 {
            return Err(SpecError::validation(
                format!("inputs[{i}].work_units"),
                "must be a finite non-negative number",
            ));
        }
    }
    for (i, hint) in file.tasks.iter().enumerate() {
        if hint.trim().is_empty() {
            return Err(SpecError::validation(format!("tasks[{i}]"), "must not be empty"));
        }
    }

    let tokens = match file.constraint {
        ConstraintField::One(t) => vec![t],
        ConstraintField::Many(ts) => ts,
    };
    let objective = ObjectiveHierarchy::from_tokens(&tokens)?
        .with_quality_floor(file.quality_floor)
        .with_energy_scope(file.energy_scope.unwrap_or_default());

    if file.mode == Mode::Pinned {
        match &file.pinned_plan {
            None => return Err(SpecError::validation("pinned_plan", "required when mode is `pinned`")),
            Some(PinnedPlan::Inline(plan)) if plan.assignments.is_empty() => {
                return Err(SpecError::validation("pinned_plan", "plan has no assignments"))
            }
            Some(PinnedPlan::Path(p)) if p.trim().is_empty() => {
                return Err(SpecError::validation("pinned_plan", "empty plan path"))
            }
            _ => {}
        }
    }

    Ok(JobSpec {
        description: file.description,
        task_hints: file.tasks,
        inputs: file.inputs,
        constraint: tokens,
        objective,
        mode: file.mode,
        pinned_plan: file.pinned_plan,
    })
}

/// Serializes a spec back into the spec-file format.
pub fn job_spec_to_json(spec: &JobSpec) -> String {
    let constraint = if spec.constraint.len() == 1 {
        ConstraintField::One(spec.constraint[0].clone())
    } else {
        ConstraintField::Many(spec.constraint.clone())
    };
    let file = SpecFile {
        description: spec.description.clone(),
        tasks: spec.task_hints.clone(),
        inputs: spec.inputs.clone(),
        constraint,
        mode: spec.mode,
        pinned_plan: spec.pinned_plan.clone(),
        quality_floor: spec.objective.quality_floor,
        energy_scope: match spec.objective.energy_scope {
            EnergyScope::Gpu => None,
            s => Some(s),
        },
    };
    serde_json::to_string_pretty(&file).expect("spec serialization is infallible")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Hinted,
    Inferred,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DagNode {
    pub id: NodeId,
    pub capability: String,
    pub work_units: f64,
    pub splittable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_chunk: Option<f64>,
    /// Upper bound on concurrent execution paths; 1 means single-path.
    #[serde(default = "one")]
    pub max_paths: u32,
    /// Cap on the quality reachable by adding execution paths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality_ceiling: Option<u32>,
    pub consumes: Vec<MediaKind>,
    pub produces: MediaKind,
    pub origin: Origin,
    /// Input item this node processes, for per-item nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item: Option<String>,
}

fn one() -> u32 {
    1
}

impl DagNode {
    pub fn is_multi_path(&self) -> bool {
        self.max_paths > 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DagEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: MediaKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkflowDag {
    pub nodes: Vec<DagNode>,
    pub edges: Vec<DagEdge>,
    /// Media kinds supplied directly by the job inputs.
    #[serde(default)]
    pub input_kinds: Vec<MediaKind>,
}

impl WorkflowDag {
    pub fn node(&self, id: &str) -> Option<&DagNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn predecessors(&self, id: &str) -> Vec<&str> {
        let mut v: Vec<&str> = self.edges.iter().filter(|e| e.to == id).map(|e| e.from.as_str()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn successors(&self, id: &str) -> Vec<&str> {
        let mut v: Vec<&str> = self.edges.iter().filter(|e| e.from == id).map(|e| e.to.as_str()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    DuplicateNode { node: NodeId },
    UnknownEndpoint { from: NodeId, to: NodeId },
    Cycle { nodes: Vec<NodeId> },
    KindMismatch { from: NodeId, to: NodeId, kind: MediaKind },
    Orphan { node: NodeId },
    InvalidWork { node: NodeId },
    MissingChunkSize { node: NodeId },
}

/// Lists every structural problem in `dag`. An empty report means the DAG is
/// well formed.
pub fn validate_dag(dag: &WorkflowDag) -> Vec<Violation> {
    let mut report = Vec::new();
    let mut by_id: BTreeMap<&str, &DagNode> = BTreeMap::new();
    for node in &dag.nodes {
        if by_id.insert(node.id.as_str(), node).is_some() {
            report.push(Violation::DuplicateNode { node: node.id.clone() });
        }
        if !node.work_units.is_finite() || node.work_units < 0.0 {
            report.push(Violation::InvalidWork { node: node.id.clone() });
        }
        if node.splittable && !node.min_chunk.is_some_and(|c| c > 0.0) {
            report.push(Violation::MissingChunkSize { node: node.id.clone() });
        }
    }

    for edge in &dag.edges {
        match (by_id.get(edge.from.as_str()), by_id.get(edge.to.as_str())) {
            (Some(p), Some(c)) => {
                if p.produces != edge.kind || !c.consumes.contains(&edge.kind) {
                    report.push(Violation::KindMismatch {
                        from: edge.from.clone(),
                        to: edge.to.clone(),
                        kind: edge.kind,
                    });
                }
            }
            _ => report.push(Violation::UnknownEndpoint { from: edge.from.clone(), to: edge.to.clone() }),
        }
    }

    for node in &dag.nodes {
        let fed =
            dag.edges.iter().any(|e| e.to == node.id) || node.consumes.iter().any(|k| dag.input_kinds.contains(k));
        if !fed {
            report.push(Violation::Orphan { node: node.id.clone() });
        }
    }

    let (_, stuck) = kahn(dag);
    if !stuck.is_empty() {
        report.push(Violation::Cycle { nodes: stuck });
    }
    report
}

#[derive(Debug, Error, PartialEq)]
pub enum DagError {
    #[error("cycle among nodes {0:?}")]
    Cycle(Vec<NodeId>),
    #[error("edge {from} -> {to} references an unknown node")]
    UnknownEndpoint { from: NodeId, to: NodeId },
}

/// Kahn's algorithm with an id-ordered frontier. Returns the order and the
/// nodes that could not be ordered.
fn kahn(dag: &WorkflowDag) -> (Vec<NodeId>, Vec<NodeId>) {
    let ids: BTreeSet<&str> = dag.nodes.iter().map(|n| n.id.as_str()).collect();
    let mut indegree: BTreeMap<&str, usize> = ids.iter().map(|id| (*id, 0)).collect();
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut seen_edges = HashSet::new();
    for e in &dag.edges {
        if !ids.contains(e.from.as_str()) || !ids.contains(e.to.as_str()) {
            continue;
        }
        if !seen_edges.insert((e.from.as_str(), e.to.as_str())) {
            continue;
        }
        *indegree.get_mut(e.to.as_str()).unwrap() += 1;
        succ.entry(e.from.as_str()).or_default().push(e.to.as_str());
    }
    let mut frontier: BTreeSet<&str> = indegree.iter().filter(|(_, d)| **d == 0).map(|(id, _)| *id).collect();
    let mut order = Vec::with_capacity(ids.len());
    while let Some(id) = frontier.pop_first() {
        order.push(id.to_string());
        for s in succ.get(id).into_iter().flatten() {
            let d = indegree.get_mut(s).unwrap();
            *d -= 1;
            if *d == 0 {
                frontier.insert(s);
            }
        }
    }
    let stuck = indegree
        .into_iter()
        .filter(|(id, d)| *d > 0 && !order.iter().any(|o| o == id))
        .map(|(id, _)| id.to_string())
        .collect();
    (order, stuck)
}

/// Deterministic topological order; peers are ordered by node id.
pub fn topological_order(dag: &WorkflowDag) -> Result<Vec<NodeId>, DagError> {
    let ids: HashSet<&str> = dag.nodes.iter().map(|n| n.id.as_str()).collect();
    if let Some(e) = dag.edges.iter().find(|e| !ids.contains(e.from.as_str()) || !ids.contains(e.to.as_str())) {
        return Err(DagError::UnknownEndpoint { from: e.from.clone(), to: e.to.clone() });
    }
    let (order, stuck) = kahn(dag);
    if stuck.is_empty() {
        Ok(order)
    } else {
        Err(DagError::Cycle(stuck))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn node(id: &str, consumes: &[MediaKind], produces: MediaKind) -> DagNode {
        DagNode {
            id: id.into(),
            capability: id.into(),
            work_units: 1.0,
            splittable: false,
            min_chunk: None,
            max_paths: 1,
            quality_ceiling: None,
            consumes: consumes.to_vec(),
            produces,
            origin: Origin::Hinted,
            item: None,
        }
    }

    fn edge(from: &str, to: &str, kind: MediaKind) -> DagEdge {
        DagEdge { from: from.into(), to: to.into(), kind }
    }

    const LISTING: &str = r#"{
        "description": "List objects shown/mentioned in the videos",
        "tasks": ["Extract frames from each video", "Run speech-to-text on all scenes", "Detect objects in the frames"],
        "inputs": [
            {"id": "cats.mov", "media_kind": "video", "work_units": 60},
            {"id": "formula_1.mov", "media_kind": "video", "work_units": 7.5}
        ],
        "constraint": "MIN_COST",
        "mode": "declarative"
    }"#;

    #[test]
    fn min_cost_maps_to_energy_then_latency() {
        let spec = parse_job_spec(LISTING).unwrap();
        assert_eq!(spec.objective.criteria(), &[Criterion::MinEnergy, Criterion::MinLatency]);
        assert_eq!(spec.task_hints.len(), 3);
        assert_eq!(spec.inputs.len(), 2);
    }

    #[test]
    fn min_dollars_is_distinct() {
        let text = LISTING.replace("MIN_COST", "MIN_DOLLARS");
        let spec = parse_job_spec(&text).unwrap();
        assert_eq!(spec.objective.primary(), Criterion::MinCostDollars);
    }

    #[test]
    fn compound_constraints_keep_priority_order() {
        let text = LISTING.replace("\"MIN_COST\"", "[\"MIN_LATENCY\", \"MIN_DOLLARS\"]");
        let spec = parse_job_spec(&text).unwrap();
        assert_eq!(
            spec.objective.criteria(),
            &[Criterion::MinLatency, Criterion::MinEnergy, Criterion::MinCostDollars]
        );
    }

    #[test]
    fn empty_inputs_rejected() {
        let text = r#"{"description": "x", "inputs": [], "constraint": "MIN_COST"}"#;
        match parse_job_spec(text) {
            Err(SpecError::Validation { path, .. }) => assert_eq!(path, "inputs"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pinned_without_plan_rejected() {
        let text = LISTING.replace("\"declarative\"", "\"pinned\"");
        match parse_job_spec(&text) {
            Err(SpecError::Validation { path, .. }) => assert_eq!(path, "pinned_plan"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_and_unknown_fields_are_schema_errors() {
        assert!(matches!(parse_job_spec("{"), Err(SpecError::Schema(_))));
        let text = LISTING.replace("\"mode\"", "\"Mode\"");
        assert!(matches!(parse_job_spec(&text), Err(SpecError::Schema(_))));
    }

    #[test]
    fn unknown_token_and_duplicate_ids() {
        let text = LISTING.replace("MIN_COST", "CHEAP");
        assert!(matches!(parse_job_spec(&text), Err(SpecError::Validation { .. })));
        let text = LISTING.replace("formula_1.mov", "cats.mov");
        assert!(matches!(parse_job_spec(&text), Err(SpecError::Validation { .. })));
    }

    #[test]
    fn spec_round_trip() {
        let spec = parse_job_spec(LISTING).unwrap();
        let again = parse_job_spec(&job_spec_to_json(&spec)).unwrap();
        assert_eq!(spec, again);
    }

    #[test]
    fn chain_validates_clean() {
        use MediaKind::*;
        let dag = WorkflowDag {
            nodes: vec![
                node("a_frames", &[Video], Image),
                node("b_detect", &[Image], Text),
                node("c_sum", &[Text], Text),
            ],
            edges: vec![edge("a_frames", "b_detect", Image), edge("b_detect", "c_sum", Text)],
            input_kinds: vec![Video],
        };
        assert!(validate_dag(&dag).is_empty());
        assert_eq!(topological_order(&dag).unwrap(), vec!["a_frames", "b_detect", "c_sum"]);
    }

    #[test]
    fn two_cycle_names_both_nodes() {
        use MediaKind::*;
        let dag = WorkflowDag {
            nodes: vec![node("A", &[Text], Text), node("B", &[Text], Text)],
            edges: vec![edge("A", "B", Text), edge("B", "A", Text)],
            input_kinds: vec![],
        };
        let report = validate_dag(&dag);
        assert!(report.contains(&Violation::Cycle { nodes: vec!["A".into(), "B".into()] }));
        assert_eq!(topological_order(&dag), Err(DagError::Cycle(vec!["A".into(), "B".into()])));
    }

    #[test]
    fn kind_mismatch_flags_exactly_the_bad_pairs() {
        // Enumerate every (edge kind, consumer kind) pair with a producer that
        // emits the edge kind; only pairs with differing kinds are mismatches.
        for carried in MediaKind::ALL {
            for accepted in MediaKind::ALL {
                let dag = WorkflowDag {
                    nodes: vec![node("p", &[carried], carried), node("c", &[accepted], MediaKind::Text)],
                    edges: vec![edge("p", "c", carried)],
                    input_kinds: vec![carried],
                };
                let mismatches =
                    validate_dag(&dag).into_iter().filter(|v| matches!(v, Violation::KindMismatch { .. })).count();
                assert_eq!(mismatches, usize::from(carried != accepted), "{carried} -> {accepted}");
            }
        }
    }

    #[test]
    fn orphan_detected() {
        use MediaKind::*;
        let dag = WorkflowDag { nodes: vec![node("stt", &[Audio], Text)], edges: vec![], input_kinds: vec![Video] };
        assert_eq!(validate_dag(&dag), vec![Violation::Orphan { node: "stt".into() }]);
    }

    #[test]
    fn singleton_and_diamond_orders() {
        use MediaKind::*;
        let single = WorkflowDag { nodes: vec![node("only", &[Text], Text)], edges: vec![], input_kinds: vec![Text] };
        assert_eq!(topological_order(&single).unwrap(), vec!["only"]);

        let diamond = WorkflowDag {
            nodes: vec![
                node("D", &[Text], Text),
                node("C", &[Text], Text),
                node("B", &[Text], Text),
                node("A", &[Text], Text),
            ],
            edges: vec![edge("A", "B", Text), edge("A", "C", Text), edge("B", "D", Text), edge("C", "D", Text)],
            input_kinds: vec![Text],
        };
        assert_eq!(topological_order(&diamond).unwrap(), vec!["A", "B", "C", "D"]);
    }
}
