use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use super::metrics::RunMetrics;

/// One executed (or preempted) chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub node: String,
    pub chunk: u32,
    pub attempt: u32,
    pub capability: String,
    pub implementation: String,
    pub sku: String,
    pub machine: usize,
    pub units: u32,
    /// Work carried by the chunk, including every execution path.
    pub work_units: f64,
    pub warm: bool,
    #[serde(serialize_with = "fixed6")]
    pub start: f64,
    #[serde(serialize_with = "fixed6")]
    pub end: f64,
    #[serde(serialize_with = "fixed6")]
    pub energy_wh: f64,
    #[serde(serialize_with = "fixed6")]
    pub dollars: f64,
    pub preempted: bool,
    /// Bookkeeping entries such as planner time; not part of the makespan.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub overhead: bool,
}

impl TraceEntry {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

pub(crate) fn fixed6<S: Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
    let raw = RawValue::from_string(format!("{value:.6}")).map_err(serde::ser::Error::custom)?;
    raw.serialize(s)
}

#[derive(Serialize, Deserialize)]
struct MetricsLine {
    metrics: RunMetrics,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Line {
    Metrics(MetricsLine),
    Entry(Box<TraceEntry>),
}

/// A trace file: chunk entries followed by an optional metrics record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceFile {
    pub entries: Vec<TraceEntry>,
    pub metrics: Option<RunMetrics>,
}

pub fn write_trace_jsonl<W: Write>(
    entries: &[TraceEntry],
    metrics: Option<&RunMetrics>,
    mut out: W,
) -> std::io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    if let Some(m) = metrics {
        serde_json::to_writer(&mut out, &MetricsLine { metrics: m.clone() })?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace_jsonl<R: BufRead>(input: R) -> std::io::Result<TraceFile> {
    let mut file = TraceFile::default();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line)? {
            Line::Entry(e) => file.entries.push(*e),
            Line::Metrics(m) => file.metrics = Some(m.metrics),
        }
    }
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry() -> TraceEntry {
        TraceEntry {
            node: "summarization".into(),
            chunk: 2,
            attempt: 0,
            capability: "summarization".into(),
            implementation: "nvlm".into(),
            sku: "gpu-a100".into(),
            machine: 1,
            units: 4,
            work_units: 16.875,
            warm: false,
            start: 57.875,
            end: 77.0,
            energy_wh: 8.5,
            dollars: 0.0722,
            preempted: false,
            overhead: false,
        }
    }

    #[test]
    fn times_have_six_decimals() {
        let mut buf = Vec::new();
        write_trace_jsonl(&[entry()], None, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains(r#""start":57.875000"#), "{text}");
        assert!(text.contains(r#""end":77.000000"#));
        assert!(!text.contains("overhead"));
    }

    #[test]
    fn jsonl_round_trip() {
        let mut e = entry();
        e.overhead = true;
        let mut buf = Vec::new();
        let metrics = RunMetrics { makespan_s: 77.0, gpu_wh: 42.0, ..RunMetrics::default() };
        write_trace_jsonl(&[entry(), e.clone()], Some(&metrics), &mut buf).unwrap();
        let back = read_trace_jsonl(&buf[..]).unwrap();
        assert_eq!(back.entries, vec![entry(), e]);
        assert_eq!(back.metrics, Some(metrics));
    }
}
