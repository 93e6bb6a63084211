//! Bundled video-understanding scenario: catalogs, lexicon, cluster, job specs
//! and the four reference configurations.

use crate::cluster::ClusterConfig;
use crate::library::AgentLibrary;
use crate::optimizer::ConfigPoint;
use crate::planner::CapabilityLexicon;

pub const SKUS: &str = include_str!("../fixtures/skus.json");
pub const AGENTS: &str = include_str!("../fixtures/agents.json");
pub const PROFILES: &str = include_str!("../fixtures/profiles.json");
pub const OBSERVATIONS: &str = include_str!("../fixtures/observations.json");
pub const LEXICON: &str = include_str!("../fixtures/lexicon.json");
pub const CLUSTER: &str = include_str!("../fixtures/cluster.json");
pub const VIDEO_SPEC_MIN_COST: &str = include_str!("../fixtures/video_understanding.json");
pub const VIDEO_SPEC_MIN_LATENCY: &str = include_str!("../fixtures/video_understanding_latency.json");
pub const VIDEO_SPEC_BASELINE: &str = include_str!("../fixtures/video_baseline.json");

pub const PIN_BASELINE: &str = include_str!("../fixtures/pins/baseline.json");
pub const PIN_CPU: &str = include_str!("../fixtures/pins/cpu.json");
pub const PIN_GPU: &str = include_str!("../fixtures/pins/gpu.json");
pub const PIN_GPU_CPU: &str = include_str!("../fixtures/pins/gpu_cpu.json");

/// Reference configurations with their expected (makespan s, GPU busy Wh).
pub const REFERENCE_RUNS: [(&str, &str, f64, f64); 4] = [
    ("baseline", PIN_BASELINE, 285.0, 155.0),
    ("cpu", PIN_CPU, 83.0, 34.0),
    ("gpu", PIN_GPU, 77.0, 43.0),
    ("gpu_cpu", PIN_GPU_CPU, 77.0, 42.0),
];

pub fn library() -> AgentLibrary {
    AgentLibrary::from_catalogs(SKUS, AGENTS, PROFILES).expect("bundled catalogs are valid")
}

pub fn lexicon() -> CapabilityLexicon {
    CapabilityLexicon::from_json(LEXICON).expect("bundled lexicon is valid")
}

pub fn cluster() -> ClusterConfig {
    ClusterConfig::from_json(CLUSTER).expect("bundled cluster is valid")
}

pub fn pin(text: &str) -> ConfigPoint {
    serde_json::from_str(text).expect("bundled pin is valid")
}

/// Resolves a bundled pinned-plan path such as `pins/cpu.json`.
pub fn bundled_pin(path: &str) -> Option<&'static str> {
    match path.trim_start_matches("./") {
        "pins/baseline.json" => Some(PIN_BASELINE),
        "pins/cpu.json" => Some(PIN_CPU),
        "pins/gpu.json" => Some(PIN_GPU),
        "pins/gpu_cpu.json" => Some(PIN_GPU_CPU),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::{calibrate_profile, ExecutionProfile, Observation};
    use serde::Deserialize;

    #[derive(Deserialize)]
    struct Recorded {
        implementation: String,
        sku: String,
        observation: Observation,
    }

    #[test]
    fn profiles_are_calibrated_from_observations() {
        let recorded: Vec<Recorded> = serde_json::from_str(OBSERVATIONS).unwrap();
        let profiles: Vec<ExecutionProfile> = serde_json::from_str(PROFILES).unwrap();
        assert_eq!(recorded.len(), profiles.len());
        for (r, p) in recorded.iter().zip(&profiles) {
            let fitted = calibrate_profile(&r.implementation, &r.sku, &r.observation).unwrap();
            assert_eq!(&fitted, p);
            let predicted = fitted.predict_elapsed(r.observation.work_units);
            assert!((predicted - r.observation.elapsed_s).abs() <= 1e-9 * r.observation.elapsed_s);
        }
    }

    #[test]
    fn gpu_to_cpu_power_ratio() {
        let lib = library();
        let gpu = lib.sku("gpu-a100").unwrap().busy_watts;
        let cpu = lib.sku("cpu-epyc").unwrap().busy_watts;
        assert_eq!(gpu / cpu, 16.0);
    }

    #[test]
    fn everything_loads() {
        let lib = library();
        lexicon().check_against(&lib).unwrap();
        assert_eq!(cluster().nodes.len(), 2);
        for (_, text, _, _) in REFERENCE_RUNS {
            assert_eq!(pin(text).assignments.len(), 7);
        }
    }
}
