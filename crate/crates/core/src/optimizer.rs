//! Configuration search over the execution levers: implementation, SKU,
//! allocation size, fan-out and execution paths.
//!
//! [`estimate`] predicts latency, energy, dollars and quality of one
//! configuration from the execution profiles and the DAG structure, assuming
//! every allocation starts cold and nothing queues. [`greedy_search`] is a
//! coordinate descent over nodes in topological order; [`exhaustive_search`]
//! scans the full stream from [`enumerate_configs`].

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::library::{AgentLibrary, ExecutionProfile, HardwareSku, SkuClass};
use crate::model::{
    topological_order, Criterion, DagError, DagNode, EnergyScope, NodeId, ObjectiveHierarchy, WorkflowDag,
};
use crate::runtime::split_task;

const MAX_SWEEPS: usize = 10;
const REL_TIE: f64 = 1e-9;

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeAssignment {
    pub implementation: String,
    pub sku: String,
    pub units: u32,
    #[serde(default = "one")]
    pub fan_out: u32,
    #[serde(default = "one")]
    pub path_count: u32,
}

/// One lever setting for every DAG node.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigPoint {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub assignments: BTreeMap<NodeId, NodeAssignment>,
}

impl ConfigPoint {
    /// Canonical string form; also the final tie-breaker between configurations.
    pub fn identifier(&self) -> String {
        let parts: Vec<String> = self
            .assignments
            .iter()
            .map(|(node, a)| {
                format!("{node}={}@{}x{}/f{}/p{}", a.implementation, a.sku, a.units, a.fan_out, a.path_count)
            })
            .collect();
        parts.join(";")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEstimate {
    pub config: ConfigPoint,
    pub latency_s: f64,
    pub gpu_wh: f64,
    pub cpu_wh: f64,
    pub dollars: f64,
    pub quality: u32,
}

impl ConfigEstimate {
    pub fn energy_wh(&self, scope: EnergyScope) -> f64 {
        match scope {
            EnergyScope::Gpu => self.gpu_wh,
            EnergyScope::Total => self.gpu_wh + self.cpu_wh,
        }
    }

    /// Value of one criterion, oriented so that smaller is better.
    pub fn criterion_value(&self, c: Criterion, scope: EnergyScope) -> f64 {
        match c {
            Criterion::MinCostDollars => self.dollars,
            Criterion::MinEnergy => self.energy_wh(scope),
            Criterion::MinLatency => self.latency_s,
            Criterion::MaxQuality => -(self.quality as f64),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum OptimizerError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no feasible configuration{0}")]
    NoFeasibleConfig(String),
    #[error(transparent)]
    Dag(#[from] DagError),
}

/// Largest allocation a single pool can hold, and the sum over all pools.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkuCapacity {
    pub max_pool: u32,
    pub total: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBounds {
    pub max_fan_out: u32,
    pub max_path_count: u32,
    /// When present, SKUs missing from the map are unavailable.
    pub capacity: Option<BTreeMap<String, SkuCapacity>>,
}

impl Default for SearchBounds {
    fn default() -> Self {
        Self { max_fan_out: 4, max_path_count: 3, capacity: None }
    }
}

impl SearchBounds {
    pub fn with_capacity(mut self, capacity: BTreeMap<String, SkuCapacity>) -> Self {
        self.capacity = Some(capacity);
        self
    }
}

/// Per-node resolution of an assignment against the library.
struct Resolved<'a> {
    profile: &'a ExecutionProfile,
    sku: &'a HardwareSku,
    quality: u32,
}

fn resolve<'a>(node: &DagNode, a: &NodeAssignment, library: &'a AgentLibrary) -> Result<Resolved<'a>, OptimizerError> {
    let bad = |msg: String| OptimizerError::InvalidConfig(format!("{}: {msg}", node.id));
    let imp = library
        .implementation(&a.implementation)
        .ok_or_else(|| bad(format!("unknown implementation {}", a.implementation)))?;
    if imp.capability != node.capability {
        return Err(bad(format!("{} implements {}, not {}", imp.name, imp.capability, node.capability)));
    }
    let sku = library.sku(&a.sku).ok_or_else(|| bad(format!("unknown sku {}", a.sku)))?;
    if !imp.sku_classes.contains(&sku.class) {
        return Err(bad(format!("{} does not run on {}", imp.name, sku.class)));
    }
    let profile = library
        .profile(&a.implementation, &a.sku, a.units)
        .ok_or_else(|| bad(format!("no profile for {}@{}x{}", a.implementation, a.sku, a.units)))?;
    if a.fan_out == 0 || a.path_count == 0 {
        return Err(bad("fan_out and path_count must be >= 1".into()));
    }
    if a.fan_out > 1 && !node.splittable {
        return Err(bad("fan-out on a node that cannot be split".into()));
    }
    if a.path_count > node.max_paths {
        return Err(bad(format!("path_count above the node limit {}", node.max_paths)));
    }
    let mut quality = imp.quality + (a.path_count - 1);
    if let Some(ceiling) = node.quality_ceiling {
        quality = quality.min(ceiling);
    }
    Ok(Resolved { profile, sku, quality })
}

/// Quality delivered by one node under an assignment.
pub fn assignment_quality(node: &DagNode, a: &NodeAssignment, library: &AgentLibrary) -> Result<u32, OptimizerError> {
    resolve(node, a, library).map(|r| r.quality)
}

/// Checks that `config` assigns exactly the nodes of `dag` with valid levers.
pub fn validate_config(config: &ConfigPoint, dag: &WorkflowDag, library: &AgentLibrary) -> Result<(), OptimizerError> {
    for node in &dag.nodes {
        let a = config
            .assignments
            .get(&node.id)
            .ok_or_else(|| OptimizerError::InvalidConfig(format!("{} is unassigned", node.id)))?;
        resolve(node, a, library)?;
    }
    if let Some(extra) = config.assignments.keys().find(|k| dag.node(k).is_none()) {
        return Err(OptimizerError::InvalidConfig(format!("{extra} is not a DAG node")));
    }
    Ok(())
}

/// Rounds to the simulator's microsecond clock.
fn quantize(seconds: f64) -> f64 {
    (seconds * 1e6).round().max(0.0) / 1e6
}

#[derive(Debug, Clone, Copy, Default)]
struct NodeCost {
    time_s: f64,
    gpu_wh: f64,
    cpu_wh: f64,
    dollars: f64,
    quality: u32,
}

fn node_cost(node: &DagNode, a: &NodeAssignment, library: &AgentLibrary) -> Result<NodeCost, OptimizerError> {
    let r = resolve(node, a, library)?;
    let chunks = split_task(node, a.fan_out, a.path_count);
    let mut cost = NodeCost { quality: r.quality, ..Default::default() };
    for c in &chunks {
        let busy = quantize(r.profile.predict_elapsed(c.work_units));
        cost.time_s = cost.time_s.max(busy);
        let unit_hours = a.units as f64 * busy / 3600.0;
        let wh = unit_hours * r.sku.busy_watts;
        match r.sku.class {
            SkuClass::Gpu => cost.gpu_wh += wh,
            SkuClass::Cpu => cost.cpu_wh += wh,
        }
        cost.dollars += unit_hours * r.sku.dollars_per_unit_hour;
    }
    Ok(cost)
}

/// Predicts the metrics of running `config` on an uncontended cluster.
pub fn estimate(
    config: &ConfigPoint,
    dag: &WorkflowDag,
    library: &AgentLibrary,
) -> Result<ConfigEstimate, OptimizerError> {
    validate_config(config, dag, library)?;
    let order = topological_order(dag)?;
    let mut finish: BTreeMap<&str, f64> = BTreeMap::new();
    let mut out = ConfigEstimate {
        config: config.clone(),
        latency_s: 0.0,
        gpu_wh: 0.0,
        cpu_wh: 0.0,
        dollars: 0.0,
        quality: if dag.nodes.is_empty() { 0 } else { u32::MAX },
    };
    for id in &order {
        let node = dag.node(id).expect("ordered ids come from the dag");
        let cost = node_cost(node, &config.assignments[id], library)?;
        let start = dag.predecessors(id).iter().map(|p| finish[p]).fold(0.0, f64::max);
        let end = start + cost.time_s;
        finish.insert(id.as_str(), end);
        out.latency_s = out.latency_s.max(end);
        out.gpu_wh += cost.gpu_wh;
        out.cpu_wh += cost.cpu_wh;
        out.dollars += cost.dollars;
        out.quality = out.quality.min(cost.quality);
    }
    Ok(out)
}

/// All valid lever settings of one node, in deterministic order.
pub fn node_options(node: &DagNode, library: &AgentLibrary, bounds: &SearchBounds) -> Vec<NodeAssignment> {
    let max_fan = if node.splittable {
        let chunks = node.min_chunk.map(|c| (node.work_units / c).floor() as u32).unwrap_or(1).max(1);
        bounds.max_fan_out.max(1).min(chunks)
    } else {
        1
    };
    let max_paths = node.max_paths.min(bounds.max_path_count).max(1);
    let mut out = Vec::new();
    for imp in library.implementations().filter(|i| i.capability == node.capability) {
        for p in library.profiles_for(&imp.name) {
            let cap = match &bounds.capacity {
                Some(map) => match map.get(&p.sku) {
                    Some(c) => Some(*c),
                    None => continue,
                },
                None => None,
            };
            if cap.is_some_and(|c| p.units > c.max_pool) {
                continue;
            }
            for fan_out in 1..=max_fan {
                if cap.is_some_and(|c| p.units * fan_out > c.total) {
                    continue;
                }
                for path_count in 1..=max_paths {
                    out.push(NodeAssignment {
                        implementation: imp.name.clone(),
                        sku: p.sku.clone(),
                        units: p.units,
                        fan_out,
                        path_count,
                    });
                }
            }
        }
    }
    out
}

/// Lazy cross product of per-node options, odometer order over node ids.
pub struct ConfigStream {
    nodes: Vec<NodeId>,
    options: Vec<Vec<NodeAssignment>>,
    cursor: Vec<usize>,
    done: bool,
}

impl ConfigStream {
    /// Number of configurations the stream yields in total.
    pub fn total(&self) -> u128 {
        if self.nodes.is_empty() {
            return 1;
        }
        self.options.iter().map(|o| o.len() as u128).product()
    }
}

impl Iterator for ConfigStream {
    type Item = ConfigPoint;

    fn next(&mut self) -> Option<ConfigPoint> {
        if self.done {
            return None;
        }
        let assignments = self
            .nodes
            .iter()
            .zip(&self.options)
            .zip(&self.cursor)
            .map(|((n, opts), &i)| (n.clone(), opts[i].clone()))
            .collect();
        // advance the last digit first
        self.done = true;
        for pos in (0..self.cursor.len()).rev() {
            self.cursor[pos] += 1;
            if self.cursor[pos] < self.options[pos].len() {
                self.done = false;
                break;
            }
            self.cursor[pos] = 0;
        }
        Some(ConfigPoint { label: None, assignments })
    }
}

pub fn enumerate_configs(dag: &WorkflowDag, library: &AgentLibrary, bounds: &SearchBounds) -> ConfigStream {
    let mut nodes: Vec<&DagNode> = dag.nodes.iter().collect();
    nodes.sort_by(|a, b| a.id.cmp(&b.id));
    let options: Vec<Vec<NodeAssignment>> = nodes.iter().map(|n| node_options(n, library, bounds)).collect();
    let done = options.iter().any(|o| o.is_empty());
    ConfigStream {
        cursor: vec![0; nodes.len()],
        nodes: nodes.into_iter().map(|n| n.id.clone()).collect(),
        options,
        done,
    }
}

fn dominates(a: &ConfigEstimate, b: &ConfigEstimate, scope: EnergyScope) -> bool {
    let av = [a.dollars, a.energy_wh(scope), a.latency_s, -(a.quality as f64)];
    let bv = [b.dollars, b.energy_wh(scope), b.latency_s, -(b.quality as f64)];
    av.iter().zip(&bv).all(|(x, y)| x <= y) && av.iter().zip(&bv).any(|(x, y)| x < y)
}

/// The non-dominated subset under (dollars, energy, latency, -quality), in input order.
pub fn pareto_filter(estimates: &[ConfigEstimate], scope: EnergyScope) -> Vec<ConfigEstimate> {
    let mut by_latency: Vec<usize> = (0..estimates.len()).collect();
    by_latency.sort_by(|&i, &j| estimates[i].latency_s.total_cmp(&estimates[j].latency_s));
    let mut keep = vec![true; estimates.len()];
    // A dominator never has larger latency, so only earlier entries in the
    // latency order need to be checked.
    for (pos, &i) in by_latency.iter().enumerate() {
        for &j in &by_latency[..pos] {
            if keep[j] && dominates(&estimates[j], &estimates[i], scope) {
                keep[i] = false;
                break;
            }
        }
        if keep[i] {
            // equal-latency points after `i` may still dominate it
            for &j in by_latency[pos + 1..].iter().take_while(|&&j| estimates[j].latency_s == estimates[i].latency_s) {
                if dominates(&estimates[j], &estimates[i], scope) {
                    keep[i] = false;
                    break;
                }
            }
        }
    }
    estimates.iter().zip(keep).filter(|(_, k)| *k).map(|(e, _)| e.clone()).collect()
}

fn cmp_values(a: f64, b: f64) -> Ordering {
    let scale = a.abs().max(b.abs()).max(1e-12);
    if (a - b).abs() <= REL_TIE * scale {
        Ordering::Equal
    } else {
        a.total_cmp(&b)
    }
}

/// Total order used for selection: feasibility, then the full criterion
/// hierarchy (near-equal values tie), then the configuration identifier.
pub fn compare_estimates(a: &ConfigEstimate, b: &ConfigEstimate, objective: &ObjectiveHierarchy) -> Ordering {
    let feasible = |e: &ConfigEstimate| objective.quality_floor.is_none_or(|f| e.quality >= f);
    feasible(b)
        .cmp(&feasible(a))
        .then_with(|| {
            objective
                .full_ranking()
                .into_iter()
                .map(|c| {
                    cmp_values(
                        a.criterion_value(c, objective.energy_scope),
                        b.criterion_value(c, objective.energy_scope),
                    )
                })
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
        .then_with(|| a.config.identifier().cmp(&b.config.identifier()))
}

fn node_local_cmp(a: &NodeCost, b: &NodeCost, objective: &ObjectiveHierarchy) -> Ordering {
    let value = |n: &NodeCost, c: Criterion| match c {
        Criterion::MinCostDollars => n.dollars,
        Criterion::MinEnergy => match objective.energy_scope {
            EnergyScope::Gpu => n.gpu_wh,
            EnergyScope::Total => n.gpu_wh + n.cpu_wh,
        },
        Criterion::MinLatency => n.time_s,
        Criterion::MaxQuality => -(n.quality as f64),
    };
    objective
        .full_ranking()
        .into_iter()
        .map(|c| cmp_values(value(a, c), value(b, c)))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: ConfigEstimate,
    /// Number of full-configuration estimates evaluated.
    pub evaluated: usize,
    pub sweeps: usize,
}

/// Greedy coordinate descent. Each node starts at the option that is best
/// for the hierarchy on its own; sweeps then re-optimize one node at a time
/// in topological order until a sweep changes nothing.
pub fn greedy_search(
    dag: &WorkflowDag,
    library: &AgentLibrary,
    objective: &ObjectiveHierarchy,
    bounds: &SearchBounds,
) -> Result<SearchOutcome, OptimizerError> {
    let order = topological_order(dag)?;
    let floor = objective.quality_floor.unwrap_or(0);
    let mut options: BTreeMap<&str, Vec<(NodeAssignment, NodeCost)>> = BTreeMap::new();
    for id in &order {
        let node = dag.node(id).expect("ordered ids come from the dag");
        let mut opts = Vec::new();
        for a in node_options(node, library, bounds) {
            let cost = node_cost(node, &a, library)?;
            if cost.quality >= floor {
                opts.push((a, cost));
            }
        }
        if opts.is_empty() {
            return Err(OptimizerError::NoFeasibleConfig(format!(" for node {id}")));
        }
        options.insert(id.as_str(), opts);
    }

    let mut current = ConfigPoint::default();
    for id in &order {
        let (a, _) =
            options[id.as_str()].iter().min_by(|x, y| node_local_cmp(&x.1, &y.1, objective)).expect("non-empty");
        current.assignments.insert(id.clone(), a.clone());
    }
    let mut best = estimate(&current, dag, library)?;
    let mut evaluated = 1;
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut improved = false;
        for id in &order {
            for (a, _) in &options[id.as_str()] {
                if current.assignments[id] == *a {
                    continue;
                }
                let mut candidate = current.clone();
                candidate.assignments.insert(id.clone(), a.clone());
                let est = estimate(&candidate, dag, library)?;
                evaluated += 1;
                if compare_estimates(&est, &best, objective) == Ordering::Less {
                    best = est;
                    current = candidate;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    if best.quality < floor {
        return Err(OptimizerError::NoFeasibleConfig(String::new()));
    }
    Ok(SearchOutcome { best, evaluated, sweeps })
}

/// Scans every configuration in the bounded space.
pub fn exhaustive_search(
    dag: &WorkflowDag,
    library: &AgentLibrary,
    objective: &ObjectiveHierarchy,
    bounds: &SearchBounds,
) -> Result<SearchOutcome, OptimizerError> {
    let floor = objective.quality_floor.unwrap_or(0);
    let mut best: Option<ConfigEstimate> = None;
    let mut evaluated = 0;
    for config in enumerate_configs(dag, library, bounds) {
        let est = estimate(&config, dag, library)?;
        evaluated += 1;
        if est.quality < floor {
            continue;
        }
        if best.as_ref().is_none_or(|b| compare_estimates(&est, b, objective) == Ordering::Less) {
            best = Some(est);
        }
    }
    best.map(|best| SearchOutcome { best, evaluated, sweeps: 0 })
        .ok_or_else(|| OptimizerError::NoFeasibleConfig(String::new()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::{AgentSpec, Entity, Implementation};
    use crate::model::{MediaKind, Origin};

    fn tiny_library() -> AgentLibrary {
        let mut lib =
            AgentLibrary::from_catalogs(crate::fixtures::SKUS, r#"{"agents":[],"implementations":[]}"#, "[]").unwrap();
        lib.register(Entity::Agent(AgentSpec {
            capability: "work".into(),
            schema: vec![],
            consumes: vec![MediaKind::Text],
            produces: MediaKind::Text,
        }))
        .unwrap();
        for (name, classes) in [("alpha", vec![SkuClass::Cpu, SkuClass::Gpu]), ("beta", vec![SkuClass::Cpu])] {
            lib.register(Entity::Implementation(Implementation {
                name: name.into(),
                capability: "work".into(),
                quality: 1,
                sku_classes: classes.into_iter().collect(),
            }))
            .unwrap();
        }
        for (imp, sku) in [("alpha", "cpu-epyc"), ("alpha", "gpu-a100"), ("beta", "cpu-epyc")] {
            lib.register(Entity::Profile(ExecutionProfile {
                implementation: imp.into(),
                sku: sku.into(),
                units: 1,
                throughput: 1.0,
                setup_s: 0.0,
            }))
            .unwrap();
        }
        lib
    }

    fn single(work: f64, splittable: bool) -> WorkflowDag {
        WorkflowDag {
            nodes: vec![DagNode {
                id: "n".into(),
                capability: "work".into(),
                work_units: work,
                splittable,
                min_chunk: splittable.then_some(1.0),
                max_paths: 1,
                quality_ceiling: None,
                consumes: vec![MediaKind::Text],
                produces: MediaKind::Text,
                origin: Origin::Hinted,
                item: None,
            }],
            edges: vec![],
            input_kinds: vec![MediaKind::Text],
        }
    }

    fn assign(imp: &str, sku: &str, fan_out: u32) -> ConfigPoint {
        ConfigPoint {
            label: None,
            assignments: [(
                "n".to_string(),
                NodeAssignment { implementation: imp.into(), sku: sku.into(), units: 1, fan_out, path_count: 1 },
            )]
            .into(),
        }
    }

    #[test]
    fn single_node_arithmetic() {
        let lib = tiny_library();
        let est = estimate(&assign("alpha", "cpu-epyc", 1), &single(10.0, false), &lib).unwrap();
        assert_eq!(est.latency_s, 10.0);
        let halved = estimate(&assign("alpha", "cpu-epyc", 2), &single(10.0, true), &lib).unwrap();
        assert_eq!(halved.latency_s, 5.0);
    }

    #[test]
    fn fan_out_on_unsplittable_node_rejected() {
        let lib = tiny_library();
        assert!(matches!(
            estimate(&assign("alpha", "cpu-epyc", 2), &single(10.0, false), &lib),
            Err(OptimizerError::InvalidConfig(_))
        ));
    }

    #[test]
    fn enumeration_counts() {
        let lib = tiny_library();
        let bounds = SearchBounds { max_fan_out: 2, ..Default::default() };
        // alpha on two SKUs plus beta on one, each with fan-out 1 or 2
        let stream = enumerate_configs(&single(10.0, true), &lib, &bounds);
        assert_eq!(stream.total(), 6);
        let configs: Vec<ConfigPoint> = stream.collect();
        assert_eq!(configs.len(), 6);
        assert!(configs
            .iter()
            .all(|c| !(c.assignments["n"].implementation == "beta" && c.assignments["n"].sku == "gpu-a100")));
    }

    #[test]
    fn capacity_bound_drops_missing_skus() {
        let lib = tiny_library();
        let bounds = SearchBounds::default()
            .with_capacity([("cpu-epyc".to_string(), SkuCapacity { max_pool: 8, total: 8 })].into());
        let configs: Vec<ConfigPoint> = enumerate_configs(&single(10.0, false), &lib, &bounds).collect();
        assert_eq!(configs.len(), 2);
        assert!(configs.iter().all(|c| c.assignments["n"].sku == "cpu-epyc"));
    }

    fn point(d: f64, e: f64, l: f64, q: u32) -> ConfigEstimate {
        ConfigEstimate { config: ConfigPoint::default(), latency_s: l, gpu_wh: e, cpu_wh: 0.0, dollars: d, quality: q }
    }

    #[test]
    fn pareto_examples() {
        let kept = pareto_filter(&[point(1., 1., 1., 0), point(2., 2., 2., 0)], EnergyScope::Gpu);
        assert_eq!(kept, vec![point(1., 1., 1., 0)]);
        let both = vec![point(1., 2., 1., 0), point(2., 1., 1., 0)];
        assert_eq!(pareto_filter(&both, EnergyScope::Gpu), both);
        // higher quality escapes domination
        let q = vec![point(1., 1., 1., 0), point(2., 2., 2., 3)];
        assert_eq!(pareto_filter(&q, EnergyScope::Gpu).len(), 2);
    }

    #[test]
    fn greedy_matches_exhaustive_on_single_node() {
        let lib = tiny_library();
        let dag = single(10.0, true);
        for tokens in [["MIN_COST"], ["MIN_LATENCY"], ["MIN_DOLLARS"], ["MAX_QUALITY"]] {
            let tokens: Vec<String> = tokens.iter().map(|s| s.to_string()).collect();
            let obj = ObjectiveHierarchy::from_tokens(&tokens).unwrap();
            let bounds = SearchBounds::default();
            let g = greedy_search(&dag, &lib, &obj, &bounds).unwrap();
            let x = exhaustive_search(&dag, &lib, &obj, &bounds).unwrap();
            assert_eq!(g.best.config, x.best.config, "{tokens:?}");
        }
    }

    #[test]
    fn quality_floor_is_respected() {
        let lib = tiny_library();
        let obj = ObjectiveHierarchy::from_tokens(&["MIN_COST".to_string()]).unwrap().with_quality_floor(Some(5));
        assert!(matches!(
            greedy_search(&single(3.0, false), &lib, &obj, &SearchBounds::default()),
            Err(OptimizerError::NoFeasibleConfig(_))
        ));
    }
}
