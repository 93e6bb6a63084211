//! Discrete-event execution of a configured DAG on a simulated cluster.
//!
//! Time advances in integer microseconds. All events sharing a timestamp are
//! applied before the scheduler runs, and the scheduler serves ready chunks
//! in enqueue order, letting later capabilities pass a blocked one.

mod metrics;
mod trace;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{AllocationId, ClusterConfig, ClusterError, ClusterEvent, ClusterState, Rewarm};
use crate::library::AgentLibrary;
use crate::model::{topological_order, DagError, DagNode, NodeId, WorkflowDag};
use crate::optimizer::{assignment_quality, validate_config, ConfigPoint, OptimizerError};

pub use metrics::{compute_metrics, summary_row, write_summary_csv, CapabilityMetrics, RunMetrics, SUMMARY_HEADER};
pub use trace::{read_trace_jsonl, write_trace_jsonl, TraceEntry, TraceFile};

const US_PER_S: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub index: u32,
    pub work_units: f64,
}

/// Splits a node into `fan_out` equal chunks, never below the node's minimum
/// chunk size. Each chunk carries the work of every execution path.
pub fn split_task(node: &DagNode, fan_out: u32, path_count: u32) -> Vec<Chunk> {
    let count = if node.splittable {
        let limit =
            node.min_chunk.filter(|c| *c > 0.0).map(|c| (node.work_units / c).floor() as u32).unwrap_or(fan_out);
        fan_out.min(limit).max(1)
    } else {
        1
    };
    let each = node.work_units / count as f64 * path_count.max(1) as f64;
    (0..count).map(|index| Chunk { index, work_units: each }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecOptions {
    /// Keep released units warm and skip setup when an allocation is fully warm.
    pub warm_reuse: bool,
    /// Re-warm idle units towards pending capabilities after each task completes.
    pub rebalance: bool,
    /// Planner time recorded in the trace; excluded from the makespan.
    pub planner_overhead_s: f64,
    /// Echoed into the metrics; the simulation itself is deterministic.
    pub seed: u64,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self { warm_reuse: true, rebalance: true, planner_overhead_s: 0.0, seed: 0 }
    }
}

impl ExecOptions {
    /// No warm reuse and no rebalancing: every chunk pays its cold setup.
    pub fn isolated() -> Self {
        Self { warm_reuse: false, rebalance: false, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeadlockError {
    pub time_s: String,
    pub stuck: Vec<NodeId>,
}

#[derive(Debug, Error, PartialEq)]
pub enum RuntimeError {
    #[error(transparent)]
    Config(#[from] OptimizerError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error("deadlock at t={}s: {} can never be placed", .0.time_s, .0.stuck.join(", "))]
    Deadlock(DeadlockError),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum SimEvent {
    ChunkDone { chunk: usize, attempt: u32 },
    Availability { index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub trace: Vec<TraceEntry>,
    pub metrics: RunMetrics,
    pub rewarms: Vec<Rewarm>,
    pub cluster_log: Vec<ClusterEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ChunkState {
    Waiting,
    Queued,
    Running { allocation: AllocationId, machine: usize, start_us: u64, warm: bool },
    Done,
}

struct ChunkRec {
    node: usize,
    index: u32,
    work: f64,
    attempt: u32,
    state: ChunkState,
}

struct NodeRec<'a> {
    node: &'a DagNode,
    implementation: String,
    sku: String,
    units: u32,
    setup_s: f64,
    throughput: f64,
    busy_watts: f64,
    rate: f64,
    chunks: Vec<usize>,
    remaining_preds: usize,
    open_chunks: usize,
}

fn to_us(seconds: f64) -> u64 {
    (seconds * US_PER_S).round().max(0.0) as u64
}

fn to_s(us: u64) -> f64 {
    us as f64 / US_PER_S
}

struct Engine<'a> {
    library: &'a AgentLibrary,
    cluster: ClusterState,
    nodes: Vec<NodeRec<'a>>,
    chunks: Vec<ChunkRec>,
    successors: Vec<Vec<usize>>,
    queue: BTreeMap<u64, usize>,
    next_seq: u64,
    heap: BinaryHeap<Reverse<(u64, SimEvent)>>,
    trace: Vec<TraceEntry>,
    rewarms: Vec<Rewarm>,
    open_nodes: usize,
    idle_wh: f64,
    last_us: u64,
}

impl<'a> Engine<'a> {
    fn enqueue(&mut self, chunk: usize) {
        self.chunks[chunk].state = ChunkState::Queued;
        self.queue.insert(self.next_seq, chunk);
        self.next_seq += 1;
    }

    fn release_node(&mut self, n: usize) {
        for c in self.nodes[n].chunks.clone() {
            self.enqueue(c);
        }
    }

    fn accrue_idle(&mut self, now_us: u64) {
        if now_us <= self.last_us {
            return;
        }
        let dt_h = to_s(now_us - self.last_us) / 3600.0;
        for p in self.cluster.pools() {
            if let Some(sku) = self.library.sku(&p.sku) {
                let idle = p.capacity.saturating_sub(p.busy());
                self.idle_wh += idle as f64 * sku.idle_watts * dt_h;
            }
        }
        self.last_us = now_us;
    }

    fn record(&mut self, chunk: usize, machine: usize, start_us: u64, end_us: u64, warm: bool, preempted: bool) {
        let c = &self.chunks[chunk];
        let n = &self.nodes[c.node];
        let busy_h = n.units as f64 * to_s(end_us - start_us) / 3600.0;
        self.trace.push(TraceEntry {
            node: n.node.id.clone(),
            chunk: c.index,
            attempt: c.attempt,
            capability: n.node.capability.clone(),
            implementation: n.implementation.clone(),
            sku: n.sku.clone(),
            machine,
            units: n.units,
            work_units: c.work,
            warm,
            start: to_s(start_us),
            end: to_s(end_us),
            energy_wh: busy_h * n.busy_watts,
            dollars: busy_h * n.rate,
            preempted,
            overhead: false,
        });
    }

    fn complete(&mut self, chunk: usize, attempt: u32, now_us: u64) -> Result<bool, RuntimeError> {
        let ChunkState::Running { allocation, machine, start_us, warm } = self.chunks[chunk].state else {
            return Ok(false);
        };
        if self.chunks[chunk].attempt != attempt {
            return Ok(false);
        }
        self.record(chunk, machine, start_us, now_us, warm, false);
        self.cluster.release(allocation, now_us)?;
        self.chunks[chunk].state = ChunkState::Done;
        let n = self.chunks[chunk].node;
        self.nodes[n].open_chunks -= 1;
        if self.nodes[n].open_chunks > 0 {
            return Ok(false);
        }
        self.open_nodes -= 1;
        for s in self.successors[n].clone() {
            self.nodes[s].remaining_preds -= 1;
            if self.nodes[s].remaining_preds == 0 {
                self.release_node(s);
            }
        }
        Ok(true)
    }

    fn preempt(&mut self, allocation: AllocationId, now_us: u64) {
        let Some(chunk) = self
            .chunks
            .iter()
            .position(|c| matches!(c.state, ChunkState::Running { allocation: a, .. } if a == allocation))
        else {
            return;
        };
        if let ChunkState::Running { machine, start_us, warm, .. } = self.chunks[chunk].state {
            self.record(chunk, machine, start_us, now_us, warm, true);
        }
        self.chunks[chunk].attempt += 1;
        self.enqueue(chunk);
    }

    fn pending_work(&self) -> BTreeMap<String, f64> {
        let mut out: BTreeMap<String, f64> = BTreeMap::new();
        for n in &self.nodes {
            if n.open_chunks > 0 {
                *out.entry(n.node.capability.clone()).or_default() += n.node.work_units.max(f64::MIN_POSITIVE);
            }
        }
        out
    }

    fn schedule(&mut self, now_us: u64) {
        let mut blocked: BTreeSet<String> = BTreeSet::new();
        let entries: Vec<(u64, usize)> = self.queue.iter().map(|(s, c)| (*s, *c)).collect();
        for (seq, chunk) in entries {
            let n = &self.nodes[self.chunks[chunk].node];
            if blocked.contains(&n.node.capability) {
                continue;
            }
            let Some(alloc) = self.cluster.allocate(&n.implementation, &n.sku, n.units, now_us) else {
                blocked.insert(n.node.capability.clone());
                continue;
            };
            let setup = if alloc.warm { 0.0 } else { n.setup_s };
            let dur_us = to_us(setup + self.chunks[chunk].work / n.throughput);
            self.queue.remove(&seq);
            self.chunks[chunk].state = ChunkState::Running {
                allocation: alloc.id,
                machine: alloc.machine,
                start_us: now_us,
                warm: alloc.warm,
            };
            let attempt = self.chunks[chunk].attempt;
            self.heap.push(Reverse((now_us + dur_us, SimEvent::ChunkDone { chunk, attempt })));
        }
    }

    fn stuck_nodes(&self) -> Vec<NodeId> {
        self.nodes.iter().filter(|n| n.open_chunks > 0).map(|n| n.node.id.clone()).collect()
    }
}

/// Runs `config` over `dag` on a fresh cluster built from `cluster`.
pub fn execute(
    dag: &WorkflowDag,
    config: &ConfigPoint,
    library: &AgentLibrary,
    cluster: &ClusterConfig,
    options: &ExecOptions,
) -> Result<RunReport, RuntimeError> {
    validate_config(config, dag, library)?;
    let order = topological_order(dag)?;
    let state = ClusterState::new(cluster, library)?.with_warm_reuse(options.warm_reuse);
    let position: BTreeMap<&str, usize> = order.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();

    let mut nodes = Vec::with_capacity(order.len());
    let mut chunks = Vec::new();
    let mut successors = vec![Vec::new(); order.len()];
    let mut quality = if order.is_empty() { 0 } else { u32::MAX };
    for (ix, id) in order.iter().enumerate() {
        let node = dag.node(id).expect("ordered ids come from the dag");
        let a = &config.assignments[id];
        quality = quality.min(assignment_quality(node, a, library)?);
        let profile = library.profile(&a.implementation, &a.sku, a.units).expect("validated");
        let sku = library.sku(&a.sku).expect("validated");
        let mut ids = Vec::new();
        for c in split_task(node, a.fan_out, a.path_count) {
            ids.push(chunks.len());
            chunks.push(ChunkRec {
                node: ix,
                index: c.index,
                work: c.work_units,
                attempt: 0,
                state: ChunkState::Waiting,
            });
        }
        let preds = dag.predecessors(id);
        for p in &preds {
            successors[position[p]].push(ix);
        }
        nodes.push(NodeRec {
            node,
            implementation: a.implementation.clone(),
            sku: a.sku.clone(),
            units: a.units,
            setup_s: profile.setup_s,
            throughput: profile.throughput,
            busy_watts: sku.busy_watts,
            rate: sku.dollars_per_unit_hour,
            open_chunks: ids.len(),
            chunks: ids,
            remaining_preds: preds.len(),
        });
    }

    let mut engine = Engine {
        library,
        cluster: state,
        open_nodes: nodes.len(),
        nodes,
        chunks,
        successors,
        queue: BTreeMap::new(),
        next_seq: 0,
        heap: BinaryHeap::new(),
        trace: Vec::new(),
        rewarms: Vec::new(),
        idle_wh: 0.0,
        last_us: 0,
    };
    for (index, e) in cluster.availability_events.iter().enumerate() {
        engine.heap.push(Reverse((to_us(e.time), SimEvent::Availability { index })));
    }
    for n in 0..engine.nodes.len() {
        if engine.nodes[n].remaining_preds == 0 {
            engine.release_node(n);
        }
    }

    let mut now_us = 0;
    // availability events at t=0 apply before the first scheduling pass
    loop {
        let mut finished_task = false;
        while let Some(Reverse((t, _))) = engine.heap.peek() {
            if *t != now_us {
                break;
            }
            let Reverse((_, event)) = engine.heap.pop().expect("peeked");
            match event {
                SimEvent::ChunkDone { chunk, attempt } => {
                    finished_task |= engine.complete(chunk, attempt, now_us)?;
                }
                SimEvent::Availability { index } => {
                    let lost =
                        engine.cluster.apply_availability(&cluster.availability_events[index], library, now_us)?;
                    for a in lost {
                        engine.preempt(a, now_us);
                    }
                }
            }
        }
        if engine.open_nodes == 0 {
            break;
        }
        if finished_task && options.rebalance {
            let pending = engine.pending_work();
            let moves = engine.cluster.rebalance_with_lookahead(&pending, library, now_us);
            engine.rewarms.extend(moves);
        }
        engine.schedule(now_us);
        let Some(Reverse((next, _))) = engine.heap.peek() else {
            return Err(RuntimeError::Deadlock(DeadlockError {
                time_s: format!("{:.6}", to_s(now_us)),
                stuck: engine.stuck_nodes(),
            }));
        };
        let next = *next;
        engine.accrue_idle(next);
        now_us = next;
    }

    if options.planner_overhead_s > 0.0 {
        engine.trace.push(TraceEntry {
            node: "planner".into(),
            chunk: 0,
            attempt: 0,
            capability: "planning".into(),
            implementation: "planner".into(),
            sku: String::new(),
            machine: 0,
            units: 0,
            work_units: 0.0,
            warm: false,
            start: 0.0,
            end: options.planner_overhead_s,
            energy_wh: 0.0,
            dollars: 0.0,
            preempted: false,
            overhead: true,
        });
    }
    let mut metrics = compute_metrics(&engine.trace, library, quality, engine.idle_wh, options.seed);
    metrics.makespan_s = to_s(now_us);
    Ok(RunReport { trace: engine.trace, metrics, rewarms: engine.rewarms, cluster_log: engine.cluster.log().to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{MediaKind, Origin};
    use crate::planner::{LexiconPlanner, Planner};

    fn video_dag() -> WorkflowDag {
        let spec = crate::model::parse_job_spec(fixtures::VIDEO_SPEC_MIN_COST).unwrap();
        LexiconPlanner.plan(&spec, &fixtures::lexicon(), &fixtures::library()).unwrap().dag
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-5 * b.abs().max(1.0)
    }

    #[test]
    fn split_respects_min_chunk() {
        let node = DagNode {
            id: "s".into(),
            capability: "summarization".into(),
            work_units: 67.5,
            splittable: true,
            min_chunk: Some(15.0),
            max_paths: 1,
            quality_ceiling: None,
            consumes: vec![MediaKind::Text],
            produces: MediaKind::Text,
            origin: Origin::Inferred,
            item: None,
        };
        assert_eq!(split_task(&node, 8, 1).len(), 4);
        assert_eq!(split_task(&node, 2, 1).len(), 2);
        let paths = split_task(&node, 1, 3);
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].work_units, 202.5);
    }

    #[test]
    fn reference_runs_reproduce_table() {
        let dag = video_dag();
        let lib = fixtures::library();
        for (label, pin, makespan, gpu_wh) in fixtures::REFERENCE_RUNS {
            let report =
                execute(&dag, &fixtures::pin(pin), &lib, &fixtures::cluster(), &ExecOptions::isolated()).unwrap();
            assert!(close(report.metrics.makespan_s, makespan), "{label}: {}", report.metrics.makespan_s);
            assert!(close(report.metrics.gpu_wh, gpu_wh), "{label}: {}", report.metrics.gpu_wh);
        }
    }

    #[test]
    fn warm_reuse_skips_a_repeated_setup() {
        let dag = video_dag();
        let lib = fixtures::library();
        let pin = fixtures::pin(fixtures::PIN_BASELINE);
        let cold = execute(&dag, &pin, &lib, &fixtures::cluster(), &ExecOptions::isolated()).unwrap();
        let warm = execute(&dag, &pin, &lib, &fixtures::cluster(), &ExecOptions::default()).unwrap();
        // the second clip allocation lands on units the first one left loaded
        assert!(close(cold.metrics.makespan_s - warm.metrics.makespan_s, 1.0));
        assert!(warm.trace.iter().any(|e| e.warm && e.implementation == "clip"));
        assert!(cold.trace.iter().all(|e| !e.warm));
    }

    #[test]
    fn overhead_does_not_move_makespan() {
        let dag = video_dag();
        let lib = fixtures::library();
        let opts = ExecOptions { planner_overhead_s: 0.77, ..ExecOptions::isolated() };
        let report = execute(&dag, &fixtures::pin(fixtures::PIN_GPU), &lib, &fixtures::cluster(), &opts).unwrap();
        assert!(close(report.metrics.makespan_s, 77.0));
        assert!(close(report.metrics.planner_overhead_s, 0.77));
    }

    #[test]
    fn oversized_allocation_deadlocks() {
        let dag = video_dag();
        let lib = fixtures::library();
        let tiny = ClusterConfig::from_json(
            r#"{"nodes":[{"skus":[{"sku_id":"cpu-epyc","units":96},{"sku_id":"gpu-a100","units":2}]}]}"#,
        )
        .unwrap();
        let err = execute(&dag, &fixtures::pin(fixtures::PIN_CPU), &lib, &tiny, &ExecOptions::default()).unwrap_err();
        match err {
            RuntimeError::Deadlock(d) => assert_eq!(d.stuck, vec!["summarization".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn revoke_requeues_preempted_chunk() {
        let dag = video_dag();
        let lib = fixtures::library();
        let mut cluster = fixtures::cluster();
        cluster.availability_events.push(crate::cluster::AvailabilityEvent {
            time: 70.0,
            sku_id: "gpu-a100".into(),
            delta: 8,
            kind: crate::cluster::AvailabilityKind::SpotRevoke,
            node: Some(1),
        });
        let report = execute(&dag, &fixtures::pin(fixtures::PIN_GPU), &lib, &cluster, &ExecOptions::default()).unwrap();
        assert_eq!(report.metrics.preemptions, 2);
        let done: Vec<&TraceEntry> =
            report.trace.iter().filter(|e| e.node == "summarization" && !e.preempted).collect();
        assert_eq!(done.len(), 4);
        assert!(report.metrics.makespan_s > 77.0);
    }
}
