use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use agentflow_core::cluster::ClusterState;
use agentflow_core::library::{calibrate_profile, Observation};
use agentflow_core::model::{
    job_spec_to_json, parse_job_spec, topological_order, validate_dag, DagEdge, EnergyScope, MediaKind,
    ObjectiveHierarchy, Violation,
};
use agentflow_core::optimizer::{
    compare_estimates, enumerate_configs, estimate, exhaustive_search, greedy_search, node_options, pareto_filter,
    ConfigEstimate, ConfigPoint, NodeAssignment, SearchBounds,
};
use agentflow_core::runtime::{execute, read_trace_jsonl, split_task, write_trace_jsonl, ExecOptions};
use agentflow_core::synth;
use proptest::prelude::*;
use rand::seq::SliceRandom;

const TOKENS: [&str; 4] = ["MIN_COST", "MIN_DOLLARS", "MIN_LATENCY", "MAX_QUALITY"];

fn objective(token: usize) -> ObjectiveHierarchy {
    ObjectiveHierarchy::from_tokens(&[TOKENS[token % 4].to_string()]).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn topological_order_respects_every_edge(seed in any::<u64>(), n in 0usize..25) {
        let dag = synth::random_dag(&mut synth::rng(seed), n, 3, 0.3);
        let order = topological_order(&dag).unwrap();
        prop_assert_eq!(order.len(), n);
        let pos: BTreeMap<&str, usize> = order.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        for e in &dag.edges {
            prop_assert!(pos[e.from.as_str()] < pos[e.to.as_str()]);
        }
    }

    #[test]
    fn validation_agrees_with_ordering(seed in any::<u64>(), n in 2usize..15, back in any::<bool>()) {
        let mut r = synth::rng(seed);
        let mut dag = synth::random_dag(&mut r, n, 3, 0.3);
        if back && !dag.edges.is_empty() {
            let e = dag.edges.choose(&mut r).unwrap().clone();
            dag.edges.push(DagEdge { from: e.to, to: e.from, kind: MediaKind::Text });
        }
        let has_cycle = validate_dag(&dag).iter().any(|v| matches!(v, Violation::Cycle { .. }));
        prop_assert_eq!(has_cycle, topological_order(&dag).is_err());
        if !back {
            prop_assert!(validate_dag(&dag).is_empty());
        }
    }

    #[test]
    fn spec_survives_a_round_trip(
        works in proptest::collection::vec(0u32..1000, 1..5),
        hints in proptest::collection::vec("[a-z]{1,8}( [a-z]{1,8}){0,3}", 0..4),
        tokens in proptest::collection::vec(0usize..4, 1..3),
        floor in proptest::option::of(0u32..6),
        total in any::<bool>(),
    ) {
        let inputs: Vec<serde_json::Value> = works
            .iter()
            .enumerate()
            .map(|(i, w)| serde_json::json!({"id": format!("in{i}.mov"), "media_kind": "video", "work_units": *w as f64 / 4.0}))
            .collect();
        let mut doc = serde_json::json!({
            "description": "round trip",
            "tasks": hints,
            "inputs": inputs,
            "constraint": tokens.iter().map(|t| TOKENS[*t]).collect::<Vec<_>>(),
        });
        if let Some(f) = floor {
            doc["quality_floor"] = f.into();
        }
        if total {
            doc["energy_scope"] = "total".into();
        }
        let spec = parse_job_spec(&doc.to_string()).unwrap();
        let again = parse_job_spec(&job_spec_to_json(&spec)).unwrap();
        prop_assert_eq!(spec, again);
    }

    #[test]
    fn calibration_inverts_prediction(
        throughput in 0.01f64..100.0,
        setup in 0.0f64..20.0,
        work in 0.1f64..500.0,
        units in 1u32..128,
    ) {
        let elapsed = setup + work / throughput;
        let fitted = calibrate_profile("imp", "sku", &Observation { work_units: work, elapsed_s: elapsed, units, setup_s: setup }).unwrap();
        prop_assert!(close(fitted.throughput, throughput));
        prop_assert!(close(fitted.predict_elapsed(work), elapsed));
    }

    #[test]
    fn raising_the_floor_only_removes_implementations(seed in any::<u64>(), lo in 0u32..5, step in 0u32..3) {
        let lib = synth::random_library(&mut synth::rng(seed), 3, 4);
        for cap in ["cap0", "cap1", "cap2"] {
            let low: BTreeSet<String> = lib.implementations_for(cap, lo).unwrap().iter().map(|i| i.name.clone()).collect();
            let high: Vec<_> = lib.implementations_for(cap, lo + step).unwrap();
            prop_assert!(high.iter().all(|i| low.contains(&i.name) && i.quality >= lo + step));
            prop_assert!(high.windows(2).all(|w| w[0].quality >= w[1].quality));
        }
    }

    #[test]
    fn split_preserves_work(work in 0.0f64..500.0, min_chunk in 0.5f64..50.0, fan in 1u32..9, paths in 1u32..4) {
        let mut node = synth::random_dag(&mut synth::rng(0), 1, 1, 0.0).nodes.remove(0);
        node.work_units = work;
        node.splittable = true;
        node.min_chunk = Some(min_chunk);
        let chunks = split_task(&node, fan, paths);
        prop_assert!(!chunks.is_empty() && chunks.len() as u32 <= fan);
        let total: f64 = chunks.iter().map(|c| c.work_units).sum();
        prop_assert!(close(total, work * paths as f64));
        if chunks.len() > 1 {
            prop_assert!(chunks.iter().all(|c| c.work_units / paths as f64 >= min_chunk - 1e-9));
        }
    }

    #[test]
    fn more_work_never_finishes_sooner(seed in any::<u64>(), n in 1usize..7, pick in any::<prop::sample::Index>(), extra in 0.0f64..50.0) {
        let s = synth::random_scenario(seed, n);
        let config = enumerate_configs(&s.dag, &s.library, &SearchBounds::default()).next().unwrap();
        let base = estimate(&config, &s.dag, &s.library).unwrap();
        let mut heavier = s.dag.clone();
        let i = pick.index(n);
        heavier.nodes[i].work_units += extra;
        let more = estimate(&config, &heavier, &s.library).unwrap();
        prop_assert!(more.latency_s >= base.latency_s - 1e-9);
        prop_assert!(more.gpu_wh + more.cpu_wh >= base.gpu_wh + base.cpu_wh - 1e-9);
        prop_assert!(more.dollars >= base.dollars - 1e-12);
    }
}

fn random_estimates(seed: u64, n: usize) -> Vec<ConfigEstimate> {
    use rand::Rng;
    let mut r = synth::rng(seed);
    (0..n)
        .map(|i| ConfigEstimate {
            config: ConfigPoint {
                label: None,
                assignments: [(
                    "n".to_string(),
                    NodeAssignment {
                        implementation: format!("c{i:03}"),
                        sku: "s".into(),
                        units: 1,
                        fan_out: 1,
                        path_count: 1,
                    },
                )]
                .into(),
            },
            latency_s: r.gen_range(0..6) as f64,
            gpu_wh: r.gen_range(0..6) as f64,
            cpu_wh: r.gen_range(0..3) as f64,
            dollars: r.gen_range(0..6) as f64,
            quality: r.gen_range(0..3),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pareto_filter_matches_pairwise_oracle(seed in any::<u64>(), n in 0usize..40, total in any::<bool>()) {
        let scope = if total { EnergyScope::Total } else { EnergyScope::Gpu };
        let points = random_estimates(seed, n);
        let vector = |e: &ConfigEstimate| {
            let energy = if total { e.gpu_wh + e.cpu_wh } else { e.gpu_wh };
            [e.dollars, energy, e.latency_s, -(e.quality as f64)]
        };
        let expected: Vec<ConfigEstimate> = points
            .iter()
            .filter(|p| {
                !points.iter().any(|q| {
                    let (a, b) = (vector(q), vector(p));
                    a.iter().zip(&b).all(|(x, y)| x <= y) && a.iter().zip(&b).any(|(x, y)| x < y)
                })
            })
            .cloned()
            .collect();
        prop_assert_eq!(pareto_filter(&points, scope), expected);
    }

    #[test]
    fn selection_ignores_input_order(seed in any::<u64>(), n in 1usize..30, token in 0usize..4) {
        let obj = objective(token);
        let mut points = random_estimates(seed, n);
        let best = points.iter().min_by(|a, b| compare_estimates(a, b, &obj)).unwrap().clone();
        points.shuffle(&mut synth::rng(seed ^ 0x5eed));
        let again = points.iter().min_by(|a, b| compare_estimates(a, b, &obj)).unwrap();
        prop_assert_eq!(&best, again);
        prop_assert!(points.iter().all(|p| compare_estimates(&best, p, &obj) != Ordering::Greater));
    }

    #[test]
    fn greedy_equals_exhaustive_on_one_node(seed in any::<u64>(), token in 0usize..4) {
        let s = synth::random_scenario(seed, 1);
        let obj = objective(token);
        let bounds = SearchBounds::default().with_capacity(s.cluster.capacity());
        let g = greedy_search(&s.dag, &s.library, &obj, &bounds);
        let x = exhaustive_search(&s.dag, &s.library, &obj, &bounds);
        match (g, x) {
            (Ok(g), Ok(x)) => prop_assert_eq!(g.best.config, x.best.config),
            (g, x) => prop_assert_eq!(g.is_err(), x.is_err()),
        }
    }

    #[test]
    fn greedy_never_beats_exhaustive(seed in any::<u64>(), n in 1usize..4, token in 0usize..4) {
        let s = synth::random_scenario(seed, n);
        let obj = objective(token);
        let bounds = SearchBounds { max_fan_out: 2, max_path_count: 2, ..SearchBounds::default() }
            .with_capacity(s.cluster.capacity());
        if let (Ok(g), Ok(x)) = (
            greedy_search(&s.dag, &s.library, &obj, &bounds),
            exhaustive_search(&s.dag, &s.library, &obj, &bounds),
        ) {
            prop_assert_ne!(compare_estimates(&g.best, &x.best, &obj), Ordering::Less);
        }
    }

    #[test]
    fn enumeration_count_is_the_product_of_options(seed in any::<u64>(), n in 1usize..4) {
        let s = synth::random_scenario(seed, n);
        let bounds = SearchBounds { max_fan_out: 2, max_path_count: 2, ..SearchBounds::default() };
        let stream = enumerate_configs(&s.dag, &s.library, &bounds);
        let total = stream.total();
        let configs: Vec<ConfigPoint> = stream.collect();
        prop_assert_eq!(configs.len() as u128, total);
        let distinct: BTreeSet<String> = configs.iter().map(|c| c.identifier()).collect();
        prop_assert_eq!(distinct.len(), configs.len());
    }

    #[test]
    fn isolated_runs_match_estimates(seed in any::<u64>(), n in 1usize..8) {
        let s = synth::random_scenario(seed, n);
        let bounds = SearchBounds::default().with_capacity(s.cluster.capacity());
        let config = enumerate_configs(&s.dag, &s.library, &bounds).next();
        prop_assume!(config.is_some());
        let config = config.unwrap();
        let est = estimate(&config, &s.dag, &s.library).unwrap();
        let report = execute(&s.dag, &config, &s.library, &s.cluster, &ExecOptions::isolated()).unwrap();
        let m = &report.metrics;
        prop_assert!(close(m.gpu_wh, est.gpu_wh) && close(m.cpu_wh, est.cpu_wh));
        prop_assert!(close(m.dollars, est.dollars));
        prop_assert_eq!(m.quality, est.quality);
        prop_assert!(m.makespan_s >= est.latency_s - 1e-5);

        // with room for everything at once there is no queueing
        let mut roomy = s.cluster.clone();
        for machine in &mut roomy.nodes {
            for sku in &mut machine.skus {
                sku.units = 1000;
            }
        }
        let free = execute(&s.dag, &config, &s.library, &roomy, &ExecOptions::isolated()).unwrap();
        prop_assert!((free.metrics.makespan_s - est.latency_s).abs() <= 1e-6 * (n as f64 + 1.0) * 4.0);
    }

    #[test]
    fn replay_is_deterministic(seed in any::<u64>(), n in 1usize..8) {
        let s = synth::random_scenario(seed, n);
        let bounds = SearchBounds::default().with_capacity(s.cluster.capacity());
        let mut config = ConfigPoint::default();
        for node in &s.dag.nodes {
            let Some(last) = node_options(node, &s.library, &bounds).pop() else {
                return Ok(());
            };
            config.assignments.insert(node.id.clone(), last);
        }
        let a = execute(&s.dag, &config, &s.library, &s.cluster, &ExecOptions::default()).unwrap();
        let b = execute(&s.dag, &config, &s.library, &s.cluster, &ExecOptions::default()).unwrap();
        prop_assert_eq!(&a, &b);
        let mut buf = Vec::new();
        write_trace_jsonl(&a.trace, Some(&a.metrics), &mut buf).unwrap();
        let back = read_trace_jsonl(&buf[..]).unwrap().entries;
        prop_assert_eq!(back.len(), a.trace.len());
        for (x, y) in back.iter().zip(&a.trace) {
            prop_assert!((x.start - y.start).abs() < 1e-6 && (x.end - y.end).abs() < 1e-6);
            prop_assert_eq!(&x.node, &y.node);
        }
    }

    #[test]
    fn cluster_never_overcommits(seed in any::<u64>(), steps in proptest::collection::vec((any::<bool>(), 1u32..6, 0usize..3), 1..60)) {
        use rand::Rng;
        let s = synth::random_scenario(seed, 1);
        let mut state = ClusterState::new(&s.cluster, &s.library).unwrap();
        let names = ["impl0_0", "impl1_0", "impl2_0"];
        let mut live = Vec::new();
        let mut r = synth::rng(seed);
        for (t, (alloc, units, imp)) in steps.into_iter().enumerate() {
            let sku = if r.gen_bool(0.5) { "cpu-x" } else { "gpu-y" };
            if alloc || live.is_empty() {
                if let Some(a) = state.allocate(names[imp], sku, units, t as u64) {
                    live.push(a.id);
                }
            } else {
                let id = live.swap_remove(r.gen_range(0..live.len()));
                state.release(id, t as u64).unwrap();
                prop_assert!(state.release(id, t as u64).is_err());
            }
            for p in state.pools() {
                prop_assert!(p.busy() + p.warm_total() <= p.capacity);
            }
        }
    }
}
