//! Seeded generators for random DAGs, libraries and cluster scenarios.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cluster::{AvailabilityEvent, AvailabilityKind, ClusterConfig, MachineSpec, SkuAllotment};
use crate::library::{AgentLibrary, AgentSpec, Entity, ExecutionProfile, HardwareSku, Implementation, SkuClass};
use crate::model::{DagEdge, DagNode, MediaKind, Origin, WorkflowDag};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random acyclic DAG over `n` text nodes with capabilities `cap0..cap{caps-1}`.
/// Node ids are shuffled so that id order differs from dependency order.
pub fn random_dag<R: Rng>(rng: &mut R, n: usize, caps: usize, edge_p: f64) -> WorkflowDag {
    let mut labels: Vec<usize> = (0..n).collect();
    labels.shuffle(rng);
    let nodes: Vec<DagNode> = (0..n)
        .map(|i| {
            let splittable = rng.gen_bool(0.5);
            DagNode {
                id: format!("t{:03}", labels[i]),
                capability: format!("cap{}", rng.gen_range(0..caps.max(1))),
                work_units: rng.gen_range(1..=40) as f64,
                splittable,
                min_chunk: splittable.then(|| rng.gen_range(1..=5) as f64),
                max_paths: rng.gen_range(1..=2),
                quality_ceiling: None,
                consumes: vec![MediaKind::Text],
                produces: MediaKind::Text,
                origin: Origin::Hinted,
                item: None,
            }
        })
        .collect();
    let mut edges = Vec::new();
    for j in 0..n {
        for i in 0..j {
            if rng.gen_bool(edge_p) {
                edges.push(DagEdge { from: nodes[i].id.clone(), to: nodes[j].id.clone(), kind: MediaKind::Text });
            }
        }
    }
    WorkflowDag { nodes, edges, input_kinds: vec![MediaKind::Text] }
}

/// Two SKUs (one CPU, one GPU) and `per_cap` implementations per capability,
/// each with profiles at one or two allocation sizes.
pub fn random_library<R: Rng>(rng: &mut R, caps: usize, per_cap: usize) -> AgentLibrary {
    let mut lib = AgentLibrary::new();
    let skus = [("cpu-x", SkuClass::Cpu, 20.0, 4.0, 0.04), ("gpu-y", SkuClass::Gpu, 300.0, 50.0, 2.5)];
    for (id, class, busy, idle, rate) in skus {
        lib.register(Entity::Sku(HardwareSku {
            sku_id: id.into(),
            class,
            generation: "synthetic".into(),
            capacity_unit: if class == SkuClass::Cpu { "core" } else { "device" }.into(),
            busy_watts: busy,
            idle_watts: idle,
            dollars_per_unit_hour: rate,
        }))
        .expect("fresh library");
    }
    for c in 0..caps.max(1) {
        let capability = format!("cap{c}");
        lib.register(Entity::Agent(AgentSpec {
            capability: capability.clone(),
            schema: vec![],
            consumes: vec![MediaKind::Text],
            produces: MediaKind::Text,
        }))
        .expect("fresh capability");
        for k in 0..per_cap.max(1) {
            let name = format!("impl{c}_{k}");
            let on_gpu = rng.gen_bool(0.6);
            let classes = if on_gpu { vec![SkuClass::Cpu, SkuClass::Gpu] } else { vec![SkuClass::Cpu] };
            lib.register(Entity::Implementation(Implementation {
                name: name.clone(),
                capability: capability.clone(),
                quality: rng.gen_range(1..=4),
                sku_classes: classes.iter().copied().collect(),
            }))
            .expect("fresh implementation");
            for class in classes {
                let sku = if class == SkuClass::Cpu { "cpu-x" } else { "gpu-y" };
                let sizes: &[u32] = if rng.gen_bool(0.5) { &[1, 2] } else { &[2] };
                for &units in sizes {
                    lib.register(Entity::Profile(ExecutionProfile {
                        implementation: name.clone(),
                        sku: sku.into(),
                        units,
                        throughput: rng.gen_range(1..=8) as f64 * units as f64 * 0.25,
                        setup_s: rng.gen_range(0..=4) as f64 * 0.5,
                    }))
                    .expect("fresh profile");
                }
            }
        }
    }
    lib
}

/// A cluster of `machines` machines, each with a few units of both SKUs.
pub fn random_cluster<R: Rng>(rng: &mut R, machines: usize) -> ClusterConfig {
    ClusterConfig {
        nodes: (0..machines.max(1))
            .map(|_| MachineSpec {
                skus: vec![
                    SkuAllotment { sku_id: "cpu-x".into(), units: rng.gen_range(2..=8) },
                    SkuAllotment { sku_id: "gpu-y".into(), units: rng.gen_range(2..=4) },
                ],
            })
            .collect(),
        availability_events: vec![],
    }
}

/// Adds `pairs` revoke/grant pairs on random pools before `horizon_s`. Every
/// revoke is returned by a later grant of the same size on the same machine.
pub fn add_churn<R: Rng>(rng: &mut R, cluster: &mut ClusterConfig, pairs: usize, horizon_s: f64) {
    for _ in 0..pairs {
        let machine = rng.gen_range(0..cluster.nodes.len());
        let pool = cluster.nodes[machine].skus.choose(rng).expect("machines have skus").clone();
        let delta = rng.gen_range(1..=pool.units.max(1));
        let at = (rng.gen_range(0.0..horizon_s) * 1000.0).round() / 1000.0;
        let back = at + (rng.gen_range(0.5..horizon_s) * 1000.0).round() / 1000.0;
        for (time, kind) in [(at, AvailabilityKind::SpotRevoke), (back, AvailabilityKind::SpotGrant)] {
            cluster.availability_events.push(AvailabilityEvent {
                time,
                sku_id: pool.sku_id.clone(),
                delta,
                kind,
                node: Some(machine),
            });
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub dag: WorkflowDag,
    pub library: AgentLibrary,
    pub cluster: ClusterConfig,
}

pub fn random_scenario(seed: u64, nodes: usize) -> Scenario {
    let mut r = rng(seed);
    let caps = 3;
    let library = random_library(&mut r, caps, 2);
    let dag = random_dag(&mut r, nodes, caps, 0.35);
    let cluster = random_cluster(&mut r, 2);
    Scenario { dag, library, cluster }
}

/// Like [`random_scenario`], with spot revocations that are later returned.
pub fn random_churn_scenario(seed: u64, nodes: usize, pairs: usize) -> Scenario {
    let mut s = random_scenario(seed, nodes);
    let mut r = rng(seed ^ 0x00c0_ffee);
    add_churn(&mut r, &mut s.cluster, pairs, 30.0);
    s
}
