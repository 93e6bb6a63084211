//! Command-line driver: plan a job spec, pick or pin a configuration, simulate
//! it, and write the artifacts.
//!
//! Exit codes: 0 success, 1 output I/O failure, 2 unreadable or invalid input,
//! 3 planning failure, 4 no feasible configuration, 5 simulation failure.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use agentflow_core::cluster::ClusterConfig;
use agentflow_core::fixtures;
use agentflow_core::library::{AgentLibrary, SkuClass};
use agentflow_core::model::{parse_job_spec, EnergyScope, JobSpec, Mode, PinnedPlan, WorkflowDag};
use agentflow_core::optimizer::{
    estimate, exhaustive_search, greedy_search, validate_config, ConfigPoint, OptimizerError, SearchBounds,
};
use agentflow_core::planner::{CapabilityLexicon, LexiconPlanner, Planner};
use agentflow_core::runtime::{
    execute, summary_row, write_summary_csv, write_trace_jsonl, ExecOptions, RunReport, SUMMARY_HEADER,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "agentflow", version, about = "Plan, optimize and simulate compound-AI workflows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan one job spec, choose a configuration and simulate it.
    Run(RunArgs),
    /// Run a baseline against a declarative spec and/or pinned configurations.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SearchMode {
    Greedy,
    Exhaustive,
}

/// Catalog, cluster and search flags shared by both commands. Missing
/// catalog paths fall back to the bundled video-understanding fixture.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub cluster: Option<PathBuf>,
    /// Execution profile catalog (JSON array).
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Hardware SKU catalog (JSON array).
    #[arg(long)]
    pub skus: Option<PathBuf>,
    /// Agent and implementation catalog.
    #[arg(long)]
    pub agents: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SearchMode::Greedy)]
    pub search: SearchMode,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "max-fanout", default_value_t = 4)]
    pub max_fanout: u32,
    #[arg(long = "max-paths", default_value_t = 3)]
    pub max_paths: u32,
    /// Disable warm reuse and rebalancing so every allocation pays its setup.
    #[arg(long = "cold-start")]
    pub cold_start: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Job spec; defaults to the bundled MIN_COST video spec.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Run this configuration instead of searching.
    #[arg(long)]
    pub pin: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Baseline job spec; defaults to the bundled pinned baseline.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Declarative job spec to compare; defaults to the bundled MIN_COST
    /// spec when no --pin is given.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Extra pinned configurations, run on the baseline's DAG.
    #[arg(long)]
    pub pin: Vec<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Input { path: String, message: String },
    #[error("{0}")]
    Planning(String),
    #[error("{0}")]
    NoFeasible(String),
    #[error("{0}")]
    Simulation(String),
    #[error("{path}: {message}")]
    Output { path: String, message: String },
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    path: Option<&'a str>,
    message: String,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Output { .. } => 1,
            CliError::Input { .. } => 2,
            CliError::Planning(_) => 3,
            CliError::NoFeasible(_) => 4,
            CliError::Simulation(_) => 5,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Output { .. } => "output",
            CliError::Input { .. } => "spec",
            CliError::Planning(_) => "planning",
            CliError::NoFeasible(_) => "no_feasible_config",
            CliError::Simulation(_) => "simulation",
        }
    }

    /// Single-line JSON for stderr.
    pub fn to_line(&self) -> String {
        let (path, message) = match self {
            CliError::Input { path, message } | CliError::Output { path, message } => {
                (Some(path.as_str()), message.clone())
            }
            other => (None, other.to_string()),
        };
        let line = ErrorLine { error: self.kind(), exit_code: self.exit_code(), path, message };
        serde_json::to_string(&line).expect("error line serializes")
    }
}

fn input_err(path: impl AsRef<Path>, message: impl ToString) -> CliError {
    CliError::Input { path: path.as_ref().display().to_string(), message: message.to_string() }
}

fn output_err(path: impl AsRef<Path>, message: impl ToString) -> CliError {
    CliError::Output { path: path.as_ref().display().to_string(), message: message.to_string() }
}

fn read_or(path: &Option<PathBuf>, bundled: &'static str) -> Result<String, CliError> {
    match path {
        Some(p) => fs::read_to_string(p).map_err(|e| input_err(p, e)),
        None => Ok(bundled.to_string()),
    }
}

fn name_of(path: &Option<PathBuf>, bundled: &str) -> String {
    path.as_ref().map_or_else(|| bundled.to_string(), |p| p.display().to_string())
}

/// Library, lexicon and cluster after loading and cross-checking.
#[derive(Debug, Clone)]
pub struct Environment {
    pub library: AgentLibrary,
    pub lexicon: CapabilityLexicon,
    pub cluster: ClusterConfig,
}

impl Environment {
    pub fn load(args: &CommonArgs) -> Result<Self, CliError> {
        let skus = read_or(&args.skus, fixtures::SKUS)?;
        let agents = read_or(&args.agents, fixtures::AGENTS)?;
        let profiles = read_or(&args.profiles, fixtures::PROFILES)?;
        let library = AgentLibrary::from_catalogs(&skus, &agents, &profiles).map_err(|e| {
            let which = [
                ("<bundled skus>", &args.skus),
                ("<bundled agents>", &args.agents),
                ("<bundled profiles>", &args.profiles),
            ]
            .iter()
            .filter_map(|(b, p)| p.as_ref().map(|_| name_of(p, b)))
            .collect::<Vec<_>>()
            .join(", ");
            input_err(if which.is_empty() { "<bundled catalogs>".to_string() } else { which }, e)
        })?;
        let lexicon_text = read_or(&args.lexicon, fixtures::LEXICON)?;
        let lexicon = CapabilityLexicon::from_json(&lexicon_text)
            .map_err(|e| input_err(name_of(&args.lexicon, "<bundled lexicon>"), e))?;
        let cluster_text = read_or(&args.cluster, fixtures::CLUSTER)?;
        let cluster_name = name_of(&args.cluster, "<bundled cluster>");
        let cluster = ClusterConfig::from_json(&cluster_text).map_err(|e| input_err(&cluster_name, e))?;
        cluster.check_against(&library).map_err(|e| input_err(&cluster_name, e))?;
        Ok(Self { library, lexicon, cluster })
    }

    fn bounds(&self, args: &CommonArgs) -> SearchBounds {
        SearchBounds { max_fan_out: args.max_fanout, max_path_count: args.max_paths, capacity: None }
            .with_capacity(self.cluster.capacity())
    }
}

/// A job spec together with where its relative paths resolve.
#[derive(Debug, Clone)]
pub struct LoadedSpec {
    pub spec: JobSpec,
    pub origin: Option<PathBuf>,
}

pub fn load_spec(path: &Option<PathBuf>, bundled: &'static str) -> Result<LoadedSpec, CliError> {
    let text = read_or(path, bundled)?;
    let spec = parse_job_spec(&text).map_err(|e| input_err(name_of(path, "<bundled spec>"), e))?;
    Ok(LoadedSpec { spec, origin: path.clone() })
}

fn load_pin_file(path: &Path) -> Result<ConfigPoint, CliError> {
    let text = fs::read_to_string(path).map_err(|e| input_err(path, e))?;
    let mut pin: ConfigPoint = serde_json::from_str(&text).map_err(|e| input_err(path, e))?;
    if pin.label.is_none() {
        pin.label = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    }
    Ok(pin)
}

fn resolve_pinned_plan(loaded: &LoadedSpec, plan: &PinnedPlan) -> Result<ConfigPoint, CliError> {
    match plan {
        PinnedPlan::Inline(c) => Ok(c.clone()),
        PinnedPlan::Path(p) => match &loaded.origin {
            Some(spec_path) => {
                let base = spec_path.parent().unwrap_or_else(|| Path::new("."));
                load_pin_file(&base.join(p))
            }
            None => {
                let text = fixtures::bundled_pin(p).ok_or_else(|| input_err(p, "no bundled plan at this path"))?;
                let mut pin = fixtures::pin(text);
                if pin.label.is_none() {
                    pin.label = Path::new(p).file_stem().map(|s| s.to_string_lossy().into_owned());
                }
                Ok(pin)
            }
        },
    }
}

/// `selected_` plus the hardware classes used by nodes whose capability can
/// run on more than one class, GPU first.
pub fn placement_label(config: &ConfigPoint, library: &AgentLibrary) -> String {
    let mut used = BTreeSet::new();
    for a in config.assignments.values() {
        let Some(imp) = library.implementation(&a.implementation) else { continue };
        let classes: BTreeSet<SkuClass> = library
            .implementations()
            .filter(|i| i.capability == imp.capability)
            .flat_map(|i| i.sku_classes.iter().copied())
            .collect();
        if classes.len() > 1 {
            if let Some(sku) = library.sku(&a.sku) {
                used.insert(sku.class);
            }
        }
    }
    let mut label = String::from("selected");
    for class in [SkuClass::Gpu, SkuClass::Cpu] {
        if used.contains(&class) {
            label.push('_');
            label.push_str(&class.to_string());
        }
    }
    label
}

/// Everything one run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub label: String,
    pub dag: WorkflowDag,
    pub config: ConfigPoint,
    pub report: RunReport,
    pub energy_scope: EnergyScope,
}

pub fn run_once(
    env: &Environment,
    loaded: &LoadedSpec,
    pin: Option<ConfigPoint>,
    args: &CommonArgs,
) -> Result<RunOutcome, CliError> {
    let spec = &loaded.spec;
    let plan = LexiconPlanner.plan(spec, &env.lexicon, &env.library).map_err(|e| CliError::Planning(e.to_string()))?;
    let dag = plan.dag;

    let pinned = match pin {
        Some(p) => Some(p),
        None if spec.mode == Mode::Pinned => {
            let plan = spec.pinned_plan.as_ref().ok_or_else(|| input_err("pinned_plan", "missing"))?;
            Some(resolve_pinned_plan(loaded, plan)?)
        }
        None => None,
    };
    let mut overhead = 0.0;
    let (config, label) = match pinned {
        Some(config) => {
            validate_config(&config, &dag, &env.library).map_err(|e| CliError::Planning(e.to_string()))?;
            let label = config.label.clone().unwrap_or_else(|| "pinned".into());
            (config, label)
        }
        None => {
            let bounds = env.bounds(args);
            let found = match args.search {
                SearchMode::Greedy => greedy_search(&dag, &env.library, &spec.objective, &bounds),
                SearchMode::Exhaustive => exhaustive_search(&dag, &env.library, &spec.objective, &bounds),
            }
            .map_err(|e| match e {
                OptimizerError::NoFeasibleConfig(_) => CliError::NoFeasible(e.to_string()),
                other => CliError::Planning(other.to_string()),
            })?;
            overhead = 0.01 * found.best.latency_s;
            let label = placement_label(&found.best.config, &env.library);
            let mut config = found.best.config;
            config.label = Some(label.clone());
            (config, label)
        }
    };
    debug_assert!(estimate(&config, &dag, &env.library).is_ok());

    let mut options = if args.cold_start { ExecOptions::isolated() } else { ExecOptions::default() };
    options.seed = args.seed;
    options.planner_overhead_s = overhead;
    let report = execute(&dag, &config, &env.library, &env.cluster, &options)
        .map_err(|e| CliError::Simulation(e.to_string()))?;
    Ok(RunOutcome { label, dag, config, report, energy_scope: spec.objective.energy_scope })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| output_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| output_err(path, e))
}

/// Writes dag.json, chosen_config.json, trace.jsonl and summary.csv.
pub fn write_artifacts(dir: &Path, outcome: &RunOutcome) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| output_err(dir, e))?;
    write_json(&dir.join("dag.json"), &outcome.dag)?;
    write_json(&dir.join("chosen_config.json"), &outcome.config)?;
    let trace_path = dir.join("trace.jsonl");
    let mut buf = Vec::new();
    write_trace_jsonl(&outcome.report.trace, Some(&outcome.report.metrics), &mut buf)
        .map_err(|e| output_err(&trace_path, e))?;
    fs::write(&trace_path, buf).map_err(|e| output_err(&trace_path, e))?;
    let summary_path = dir.join("summary.csv");
    let mut buf = Vec::new();
    write_summary_csv(&[(outcome.label.as_str(), &outcome.report.metrics)], &mut buf)
        .map_err(|e| output_err(&summary_path, e))?;
    fs::write(&summary_path, buf).map_err(|e| output_err(&summary_path, e))
}

/// Runs one spec and returns the text for stdout.
pub fn cmd_run(args: &RunArgs) -> Result<String, CliError> {
    let env = Environment::load(&args.common)?;
    let loaded = load_spec(&args.spec, fixtures::VIDEO_SPEC_MIN_COST)?;
    let pin = args.pin.as_deref().map(load_pin_file).transpose()?;
    let outcome = run_once(&env, &loaded, pin, &args.common)?;
    write_artifacts(&args.common.out, &outcome)?;
    Ok(format!("{SUMMARY_HEADER}\n{}\n", summary_row(&outcome.label, &outcome.report.metrics)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub label: String,
    pub makespan_s: f64,
    pub energy_wh: f64,
    pub speedup: f64,
    pub energy_efficiency: f64,
}

/// Ratios of `baseline` over `other`: makespan for speedup, energy in the
/// baseline's scope for efficiency.
pub fn ratios(baseline: &RunOutcome, other: &RunOutcome) -> ComparisonRow {
    let energy = |o: &RunOutcome| match baseline.energy_scope {
        EnergyScope::Gpu => o.report.metrics.gpu_wh,
        EnergyScope::Total => o.report.metrics.total_wh,
    };
    let ratio = |a: f64, b: f64| {
        if b > 0.0 {
            a / b
        } else if a > 0.0 {
            f64::INFINITY
        } else {
            1.0
        }
    };
    ComparisonRow {
        label: other.label.clone(),
        makespan_s: other.report.metrics.makespan_s,
        energy_wh: energy(other),
        speedup: ratio(baseline.report.metrics.makespan_s, other.report.metrics.makespan_s),
        energy_efficiency: ratio(energy(baseline), energy(other)),
    }
}

pub const COMPARE_HEADER: &str = "config_label,makespan_s,energy_wh,speedup,energy_efficiency";

/// Runs every configuration and returns (stdout text, rows).
pub fn cmd_compare(args: &CompareArgs) -> Result<(String, Vec<ComparisonRow>), CliError> {
    let env = Environment::load(&args.common)?;
    let baseline_spec = load_spec(&args.baseline, fixtures::VIDEO_SPEC_BASELINE)?;
    let mut jobs: Vec<(LoadedSpec, Option<ConfigPoint>)> = vec![(baseline_spec.clone(), None)];
    if args.spec.is_some() || args.pin.is_empty() {
        jobs.push((load_spec(&args.spec, fixtures::VIDEO_SPEC_MIN_COST)?, None));
    }
    for p in &args.pin {
        jobs.push((baseline_spec.clone(), Some(load_pin_file(p)?)));
    }

    let results: Vec<Result<RunOutcome, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(spec, pin)| {
                let env = &env;
                let common = &args.common;
                scope.spawn(move || run_once(env, spec, pin.clone(), common))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
    });
    let outcomes = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut used = BTreeSet::new();
    for (i, o) in outcomes.iter().enumerate() {
        let stem = if i == 0 { "baseline".to_string() } else { o.label.clone() };
        let mut dir = stem.clone();
        let mut k = 2;
        while !used.insert(dir.clone()) {
            dir = format!("{stem}_{k}");
            k += 1;
        }
        write_artifacts(&args.common.out.join(dir), o)?;
    }

    let rows: Vec<ComparisonRow> = outcomes.iter().map(|o| ratios(&outcomes[0], o)).collect();
    let mut text = String::from(COMPARE_HEADER);
    text.push('\n');
    for r in &rows {
        text.push_str(&format!(
            "{},{:.6},{:.6},{:.2},{:.2}\n",
            r.label, r.makespan_s, r.energy_wh, r.speedup, r.energy_efficiency
        ));
    }
    let report_path = args.common.out.join("comparison.csv");
    fs::write(&report_path, &text).map_err(|e| output_err(&report_path, e))?;
    let summary_path = args.common.out.join("summary.csv");
    let mut buf = Vec::new();
    let summary: Vec<(&str, &_)> = outcomes.iter().map(|o| (o.label.as_str(), &o.report.metrics)).collect();
    write_summary_csv(&summary, &mut buf).map_err(|e| output_err(&summary_path, e))?;
    fs::write(&summary_path, buf).map_err(|e| output_err(&summary_path, e))?;
    Ok((text, rows))
}

/// Dispatches a parsed command line; returns stdout text or the error.
pub fn dispatch(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args).map(|(text, _)| text),
    }
}
