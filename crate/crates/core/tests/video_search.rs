use agentflow_core::fixtures;
use agentflow_core::model::{parse_job_spec, WorkflowDag};
use agentflow_core::optimizer::{
    estimate, exhaustive_search, greedy_search, ConfigEstimate, ConfigPoint, SearchBounds,
};
use agentflow_core::planner::{LexiconPlanner, Planner};

fn plan(spec: &str) -> (WorkflowDag, agentflow_core::model::ObjectiveHierarchy) {
    let spec = parse_job_spec(spec).unwrap();
    let plan = LexiconPlanner.plan(&spec, &fixtures::lexicon(), &fixtures::library()).unwrap();
    (plan.dag, spec.objective)
}

fn bounds() -> SearchBounds {
    SearchBounds::default().with_capacity(fixtures::cluster().capacity())
}

/// Same SKU on every node, which is what distinguishes the reference configurations.
fn same_placement(a: &ConfigPoint, b: &ConfigPoint) -> bool {
    a.assignments.len() == b.assignments.len() && a.assignments.iter().all(|(node, x)| b.assignments[node].sku == x.sku)
}

/// The search result ties `reference` on latency and GPU energy, pays no more
/// dollars, and places every node on the same SKU.
fn matches_reference(found: &ConfigEstimate, reference: &str) {
    let (dag, _) = plan(fixtures::VIDEO_SPEC_MIN_COST);
    let pin = fixtures::pin(reference);
    let expected = estimate(&pin, &dag, &fixtures::library()).unwrap();
    assert!(same_placement(&found.config, &pin), "{:#?}", found.config);
    assert!((found.latency_s - expected.latency_s).abs() < 1e-9);
    assert!((found.gpu_wh - expected.gpu_wh).abs() < 1e-9);
    assert!(found.dollars <= expected.dollars + 1e-12);
}

#[test]
fn reference_estimates_match_table() {
    let (dag, _) = plan(fixtures::VIDEO_SPEC_MIN_COST);
    let lib = fixtures::library();
    for (label, pin, makespan, gpu_wh) in fixtures::REFERENCE_RUNS {
        let est = estimate(&fixtures::pin(pin), &dag, &lib).unwrap();
        assert!((est.latency_s - makespan).abs() < 1e-9, "{label} {}", est.latency_s);
        assert!((est.gpu_wh - gpu_wh).abs() < 1e-9, "{label} {}", est.gpu_wh);
    }
}

#[test]
fn min_cost_selects_cpu_configuration() {
    let (dag, objective) = plan(fixtures::VIDEO_SPEC_MIN_COST);
    let lib = fixtures::library();
    let out = greedy_search(&dag, &lib, &objective, &bounds()).unwrap();
    matches_reference(&out.best, fixtures::PIN_CPU);
    let full = exhaustive_search(&dag, &lib, &objective, &bounds()).unwrap();
    assert_eq!(full.evaluated, 1536);
    assert_eq!(full.best.config, out.best.config);
}

#[test]
fn min_latency_selects_mixed_configuration() {
    let (dag, objective) = plan(fixtures::VIDEO_SPEC_MIN_LATENCY);
    let lib = fixtures::library();
    let out = greedy_search(&dag, &lib, &objective, &bounds()).unwrap();
    matches_reference(&out.best, fixtures::PIN_GPU_CPU);
    let full = exhaustive_search(&dag, &lib, &objective, &bounds()).unwrap();
    assert_eq!(full.best.config, out.best.config);
}

#[test]
fn without_capacity_bounds_absent_hardware_wins() {
    let (dag, objective) = plan(fixtures::VIDEO_SPEC_MIN_LATENCY);
    let out = greedy_search(&dag, &fixtures::library(), &objective, &SearchBounds::default()).unwrap();
    assert_eq!(out.best.config.assignments["summarization"].sku, "gpu-h100");
}
