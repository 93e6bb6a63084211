use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::trace::{fixed6, TraceEntry};
use crate::library::{AgentLibrary, SkuClass};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CapabilityMetrics {
    pub chunks: u32,
    pub busy_unit_s: f64,
    pub energy_wh: f64,
    pub dollars: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    #[serde(serialize_with = "fixed6")]
    pub makespan_s: f64,
    /// Busy energy of GPU units.
    pub gpu_wh: f64,
    /// Busy energy of CPU units.
    pub cpu_wh: f64,
    pub total_wh: f64,
    /// Busy energy plus idle draw of every provisioned unit up to the makespan.
    pub wall_wh: f64,
    pub dollars: f64,
    pub quality: u32,
    pub preemptions: u32,
    #[serde(serialize_with = "fixed6")]
    pub planner_overhead_s: f64,
    pub per_capability: BTreeMap<String, CapabilityMetrics>,
    pub seed: u64,
}

/// Aggregates a trace. `idle_wh` is the idle draw integrated by the engine.
pub fn compute_metrics(
    trace: &[TraceEntry],
    library: &AgentLibrary,
    quality: u32,
    idle_wh: f64,
    seed: u64,
) -> RunMetrics {
    let mut m = RunMetrics { quality, seed, ..Default::default() };
    for e in trace {
        if e.overhead {
            m.planner_overhead_s += e.duration();
            continue;
        }
        m.makespan_s = m.makespan_s.max(e.end);
        match library.sku(&e.sku).map(|s| s.class) {
            Some(SkuClass::Gpu) => m.gpu_wh += e.energy_wh,
            Some(SkuClass::Cpu) => m.cpu_wh += e.energy_wh,
            None => {}
        }
        m.dollars += e.dollars;
        if e.preempted {
            m.preemptions += 1;
        }
        let c = m.per_capability.entry(e.capability.clone()).or_default();
        c.chunks += 1;
        c.busy_unit_s += e.units as f64 * e.duration();
        c.energy_wh += e.energy_wh;
        c.dollars += e.dollars;
    }
    m.total_wh = m.gpu_wh + m.cpu_wh;
    m.wall_wh = m.total_wh + idle_wh;
    m
}

pub const SUMMARY_HEADER: &str = "config_label,makespan_s,gpu_wh,cpu_wh,total_wh,dollars,quality,seed";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn summary_row(label: &str, m: &RunMetrics) -> String {
    format!(
        "{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}",
        csv_field(label),
        m.makespan_s,
        m.gpu_wh,
        m.cpu_wh,
        m.total_wh,
        m.dollars,
        m.quality,
        m.seed
    )
}

pub fn write_summary_csv<W: Write>(rows: &[(&str, &RunMetrics)], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for (label, m) in rows {
        writeln!(out, "{}", summary_row(label, m))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_with_commas_are_quoted() {
        let row = summary_row("a,b", &RunMetrics::default());
        assert!(row.starts_with("\"a,b\","));
        assert_eq!(row.split(',').count(), SUMMARY_HEADER.split(',').count() + 1);
    }
}
