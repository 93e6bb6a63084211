//! Browser bindings over the bundled video-understanding workload.
//!
//! Every export takes and returns JSON strings so the page needs no glue
//! beyond `JSON.parse`.

use agentflow_core::fixtures;
use agentflow_core::model::{parse_job_spec, JobSpec, ObjectiveHierarchy, WorkflowDag};
use agentflow_core::optimizer::{enumerate_configs, estimate, greedy_search, pareto_filter, SearchBounds};
use agentflow_core::planner::{LexiconPlanner, Planner};
use agentflow_core::runtime::{execute, ExecOptions};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

const FRONTIER_LIMIT: u128 = 20_000;

fn plan(spec: &JobSpec) -> Result<WorkflowDag, String> {
    LexiconPlanner.plan(spec, &fixtures::lexicon(), &fixtures::library()).map(|p| p.dag).map_err(|e| e.to_string())
}

fn objective_for(spec: &JobSpec, constraint: &str) -> Result<ObjectiveHierarchy, String> {
    let tokens: Vec<String> = constraint.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect();
    if tokens.is_empty() {
        return Ok(spec.objective.clone());
    }
    let objective = ObjectiveHierarchy::from_tokens(&tokens).map_err(|e| e.to_string())?;
    Ok(objective.with_quality_floor(spec.objective.quality_floor).with_energy_scope(spec.objective.energy_scope))
}

fn bounds() -> SearchBounds {
    SearchBounds::default().with_capacity(fixtures::cluster().capacity())
}

pub fn default_spec_text(name: &str) -> Option<&'static str> {
    match name {
        "min_cost" => Some(fixtures::VIDEO_SPEC_MIN_COST),
        "min_latency" => Some(fixtures::VIDEO_SPEC_MIN_LATENCY),
        _ => None,
    }
}

pub fn search_json(spec_text: &str, constraint: &str) -> Result<String, String> {
    let spec = parse_job_spec(spec_text).map_err(|e| e.to_string())?;
    let objective = objective_for(&spec, constraint)?;
    let dag = plan(&spec)?;
    let outcome = greedy_search(&dag, &fixtures::library(), &objective, &bounds()).map_err(|e| e.to_string())?;
    Ok(json!({
        "objective": objective.full_ranking(),
        "dag": dag,
        "best": outcome.best,
        "evaluated": outcome.evaluated,
        "sweeps": outcome.sweeps,
    })
    .to_string())
}

#[derive(Serialize)]
struct FrontierPoint {
    id: String,
    latency_s: f64,
    energy_wh: f64,
    dollars: f64,
    quality: u32,
    pareto: bool,
}

pub fn frontier_json(spec_text: &str) -> Result<String, String> {
    let spec = parse_job_spec(spec_text).map_err(|e| e.to_string())?;
    let dag = plan(&spec)?;
    let lib = fixtures::library();
    let stream = enumerate_configs(&dag, &lib, &bounds());
    if stream.total() > FRONTIER_LIMIT {
        return Err(format!("{} configurations is too many to plot", stream.total()));
    }
    let scope = spec.objective.energy_scope;
    let all = stream.map(|c| estimate(&c, &dag, &lib)).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    let front: std::collections::BTreeSet<String> =
        pareto_filter(&all, scope).iter().map(|e| e.config.identifier()).collect();
    let points: Vec<FrontierPoint> = all
        .iter()
        .map(|e| {
            let id = e.config.identifier();
            FrontierPoint {
                pareto: front.contains(&id),
                id,
                latency_s: e.latency_s,
                energy_wh: e.energy_wh(scope),
                dollars: e.dollars,
                quality: e.quality,
            }
        })
        .collect();
    Ok(json!({
        "energy_scope": scope,
        "total": points.len(),
        "pareto_count": front.len(),
        "points": points,
    })
    .to_string())
}

pub fn simulate_json(pin_name: &str, warm: bool) -> Result<String, String> {
    let text = fixtures::REFERENCE_RUNS
        .iter()
        .find(|(label, ..)| *label == pin_name)
        .map(|(_, text, ..)| *text)
        .ok_or_else(|| format!("unknown configuration {pin_name:?}"))?;
    let spec = parse_job_spec(fixtures::VIDEO_SPEC_BASELINE).map_err(|e| e.to_string())?;
    let dag = plan(&spec)?;
    let options = if warm { ExecOptions::default() } else { ExecOptions::isolated() };
    let run = execute(&dag, &fixtures::pin(text), &fixtures::library(), &fixtures::cluster(), &options)
        .map_err(|e| e.to_string())?;
    Ok(json!({
        "label": pin_name,
        "trace": run.trace,
        "metrics": run.metrics,
    })
    .to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = defaultSpec)]
pub fn default_spec(name: &str) -> Result<String, JsValue> {
    js(default_spec_text(name).map(str::to_string).ok_or_else(|| format!("no bundled spec {name:?}")))
}

/// Plans the spec and runs greedy search; `constraint` overrides the spec's
/// objective when non-empty (comma separated tokens).
#[wasm_bindgen]
pub fn search(spec: &str, constraint: &str) -> Result<String, JsValue> {
    js(search_json(spec, constraint))
}

#[wasm_bindgen]
pub fn frontier(spec: &str) -> Result<String, JsValue> {
    js(frontier_json(spec))
}

#[wasm_bindgen]
pub fn simulate(pin: &str, warm: bool) -> Result<String, JsValue> {
    js(simulate_json(pin, warm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn search_picks_the_cpu_placement_under_min_cost() {
        let out: Value = serde_json::from_str(&search_json(fixtures::VIDEO_SPEC_MIN_COST, "").unwrap()).unwrap();
        assert_eq!(out["best"]["latency_s"], 83.0);
        assert_eq!(out["best"]["gpu_wh"], 34.0);
        assert_eq!(out["dag"]["nodes"].as_array().unwrap().len(), 7);
    }

    #[test]
    fn constraint_override_changes_the_choice() {
        let out: Value =
            serde_json::from_str(&search_json(fixtures::VIDEO_SPEC_MIN_COST, "MIN_LATENCY").unwrap()).unwrap();
        assert_eq!(out["best"]["latency_s"], 77.0);
        assert!(search_json(fixtures::VIDEO_SPEC_MIN_COST, "MIN_VIBES").is_err());
    }

    #[test]
    fn frontier_marks_a_nonempty_pareto_set() {
        let out: Value = serde_json::from_str(&frontier_json(fixtures::VIDEO_SPEC_MIN_COST).unwrap()).unwrap();
        assert_eq!(out["total"], 1536);
        let points = out["points"].as_array().unwrap();
        let pareto = points.iter().filter(|p| p["pareto"] == true).count();
        assert!(pareto > 0 && pareto < points.len());
        assert_eq!(out["pareto_count"], pareto);
    }

    #[test]
    fn simulate_reproduces_the_cold_baseline() {
        let out: Value = serde_json::from_str(&simulate_json("baseline", false).unwrap()).unwrap();
        assert_eq!(out["metrics"]["makespan_s"], 285.0);
        assert!(simulate_json("nope", true).is_err());
    }

    #[test]
    fn bundled_specs_are_named() {
        assert!(default_spec_text("min_latency").is_some());
        assert!(default_spec_text("other").is_none());
    }
}
