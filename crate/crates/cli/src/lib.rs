//! Command-line driver: simulate a model, emit traces, infer invariants,
//! check them against physical specifications and export plot data.
//!
//! Every command returns a [`CliError`] whose [`CliError::exit_code`] is the
//! process status: 0 success, 2 config/parse, 3 simulation, 4 mismatch.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use thiserror::Error;

use cpspec::automata::{compose, CpioaDoc};
use cpspec::cases::{self, CaseError, CaseModel, Scenario, SteadyState, SuiteOutput};
use cpspec::infer::{self, CandidateInvariant, Inference, InferenceConfig, InvariantSet, Splitter, TraceSet};
use cpspec::model::{Diagram, DiagramDoc};
use cpspec::sim::{write_csv, InitialConditionSet, SimConfig};
use cpspec::spec::{detect_mismatch, load_specs, MismatchReport, PhysSpec};
use cpspec::trace::{
    read_decls, read_dtrace, write_decls, write_dtrace, Binding, Bindings, BlockSelection, InstrumentationPlan,
    TraceRecord,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{file}: {message}")]
    Parse { file: String, message: String },
    #[error("{0}")]
    Sim(String),
    #[error("{0}")]
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Parse { .. } => 2,
            CliError::Sim(_) => 3,
            CliError::Mismatch(_) => 4,
        }
    }
}

impl From<CaseError> for CliError {
    fn from(e: CaseError) -> Self {
        match e {
            CaseError::Sim(e) => CliError::Sim(e.to_string()),
            e => CliError::Config(e.to_string()),
        }
    }
}

fn parse_err(file: &Path, e: impl ToString) -> CliError {
    CliError::Parse {
        file: file.display().to_string(),
        message: e.to_string(),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

#[derive(Debug, Parser)]
#[command(name = "cpspec", version, about = "Detect mismatches between physical specifications and controller behavior")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a model and write one CSV + decls + dtrace triple per run.
    Simulate(ModelArgs),
    /// Infer invariants from dtrace files (decls next to each with the same stem).
    Infer(InferArgs),
    /// Check an invariant file against a specification file.
    Check(CheckArgs),
    /// Simulate, infer, project and check in one go.
    Pipeline(ModelArgs),
    /// List the registered scenarios.
    Scenarios,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// Registered scenario id, e.g. buck/baseline (see `scenarios`).
    #[arg(long)]
    pub scenario: Option<String>,
    /// Model file (diagram + plant + controller JSON); needs --config with sim and initial.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// JSON pipeline config overriding scenario settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Specification file (JSON list) replacing the scenario's.
    #[arg(long)]
    pub specs: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of sampled initial conditions.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Also exit 4 when a comparison is Incomparable.
    #[arg(long)]
    pub strict: bool,
    /// all | subsystems | comma-separated block ids
    #[arg(long)]
    pub instrument: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct InferArgs {
    /// dtrace files
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Take the mode splitter and steady-state rule from this scenario.
    #[arg(long)]
    pub scenario: Option<String>,
    /// JSON pipeline config (its `inference`, `splitter` and `steady_state` are used).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Fixed steady-state time; splits every point at `t = ts`.
    #[arg(long)]
    pub ts: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    /// Invariant file: text (one per line) or JSON.
    #[arg(long)]
    pub invariants: PathBuf,
    #[arg(long)]
    pub specs: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Name used in the report's scenario column.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub strict: bool,
}

/// Optional overrides read from `--config`. Relative paths resolve against
/// the config file's directory.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub scenario: Option<String>,
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub specs: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub sim: Option<SimConfig>,
    #[serde(default)]
    pub initial: Option<InitialConditionSet>,
    #[serde(default)]
    pub inference: Option<InferenceConfig>,
    #[serde(default)]
    pub instrumentation: Option<InstrumentationPlan>,
    #[serde(default)]
    pub splitter: Option<Splitter>,
    #[serde(default)]
    pub steady_state: Option<SteadyState>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let mut cfg: PipelineConfig = serde_json::from_str(&read(path)?).map_err(|e| parse_err(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.model, &mut cfg.specs, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Model file: a block diagram and the two automata realizing it.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub name: String,
    pub diagram: DiagramDoc,
    pub plant: CpioaDoc,
    pub controller: CpioaDoc,
    /// `block.var` -> binding, for block variables not named like an automaton variable.
    #[serde(default)]
    pub bindings: BTreeMap<String, Binding>,
}

pub fn parse_selection(s: &str) -> Result<BlockSelection, CliError> {
    match s.trim() {
        "all" => Ok(BlockSelection::AllBlocks),
        "subsystems" => Ok(BlockSelection::SubsystemsOnly),
        ids => {
            let ids: Vec<String> = ids.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
            if ids.is_empty() {
                return Err(CliError::Config("--instrument needs all, subsystems or block ids".into()));
            }
            Ok(BlockSelection::Explicit(ids))
        }
    }
}

/// A resolved experiment: the scenario plus the file-name stem.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub stem: String,
    pub scenario: Scenario,
    pub out: PathBuf,
    pub strict: bool,
    specs_path: Option<PathBuf>,
}

fn load_model(path: &Path, cfg: &PipelineConfig) -> Result<(String, Scenario), CliError> {
    let m: ModelFile = serde_json::from_str(&read(path)?).map_err(|e| parse_err(path, e))?;
    let cfg_err = |e: &dyn ToString| CliError::Config(format!("{}: {}", path.display(), e.to_string()));
    let diagram = Diagram::from_doc(m.diagram).map_err(|e| cfg_err(&e))?;
    let plant = m.plant.build().map_err(|e| cfg_err(&e))?;
    let controller = m.controller.build().map_err(|e| cfg_err(&e))?;
    let composed = compose(&plant, &controller).map_err(|e| cfg_err(&e))?;
    let mut bindings = Bindings::new();
    for (k, b) in m.bindings {
        let (block, var) = k
            .split_once('.')
            .ok_or_else(|| cfg_err(&format!("binding key `{k}` is not block.var")))?;
        bindings = bindings.bind(block, var, b);
    }
    let missing = |what: &str| CliError::Config(format!("a model file needs `{what}` in --config"));
    let scenario = Scenario {
        id: m.name.clone(),
        description: format!("model file {}", path.display()),
        model: CaseModel {
            diagram,
            plant,
            controller,
            composed,
        },
        sim: cfg.sim.clone().ok_or_else(|| missing("sim"))?,
        initial: cfg.initial.clone().ok_or_else(|| missing("initial"))?,
        plan: InstrumentationPlan::default(),
        bindings,
        splitter: Splitter::default(),
        steady_state: SteadyState::Fixed(f64::INFINITY),
        inference: InferenceConfig::default(),
        specs: vec![],
    };
    Ok((m.name, scenario))
}

/// Combines flags, config file and registry into one scenario. Flags win
/// over the config file, which wins over registry defaults.
pub fn resolve(args: &ModelArgs) -> Result<Resolved, CliError> {
    let cfg = match &args.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let model = args.model.clone().or(cfg.model.clone());
    let id = args.scenario.clone().or(cfg.scenario.clone());
    let (stem, mut scenario) = match (id, model) {
        (Some(_), Some(_)) => return Err(CliError::Config("give either a scenario or a model file, not both".into())),
        (None, None) => return Err(CliError::Config("no model: pass --scenario or --model".into())),
        (Some(id), None) => {
            let s = cases::scenario(&id)?;
            let stem = id.split('/').next().unwrap_or(&id).to_string();
            (stem, s)
        }
        (None, Some(path)) => load_model(&path, &cfg)?,
    };
    if let Some(sim) = cfg.sim {
        scenario.sim = sim;
    }
    if let Some(i) = cfg.initial {
        scenario.initial = i;
    }
    if let Some(i) = cfg.inference {
        scenario.inference = i;
    }
    if let Some(p) = cfg.instrumentation {
        scenario.plan = p;
    }
    if let Some(s) = cfg.splitter {
        scenario.splitter = s;
    }
    if let Some(s) = cfg.steady_state {
        scenario.steady_state = s;
    }
    if let Some(sel) = &args.instrument {
        scenario.plan.selection = parse_selection(sel)?;
    }
    if let Some(seed) = args.seed {
        scenario.sim.seed = seed;
    }
    if let Some(n) = args.runs {
        scenario.initial.samples = n;
    }
    scenario
        .inference
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let out = if args.out == Path::new("out") {
        cfg.out.unwrap_or_else(|| args.out.clone())
    } else {
        args.out.clone()
    };
    Ok(Resolved {
        stem,
        scenario,
        out,
        strict: args.strict,
        specs_path: args.specs.clone().or(cfg.specs),
    })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))
}

fn load_spec_file(path: &Path) -> Result<Vec<PhysSpec>, CliError> {
    let specs = load_specs(&read(path)?).map_err(|e| parse_err(path, e))?;
    for s in &specs {
        s.validate().map_err(|e| parse_err(path, e))?;
    }
    Ok(specs)
}

/// Runs one command, writing human-readable output to `stdout`.
pub fn run(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Scenarios => {
            for (id, desc) in cases::scenario_ids() {
                let _ = writeln!(stdout, "{id:<18} {desc}");
            }
            Ok(())
        }
        Command::Simulate(args) => {
            let r = resolve(&args)?;
            let _ = writeln!(stderr, "seed: {}", r.scenario.sim.seed);
            cmd_simulate(&r, stdout).map(|_| ())
        }
        Command::Infer(args) => cmd_infer(&args, stdout),
        Command::Check(args) => cmd_check(&args, stdout),
        Command::Pipeline(args) => {
            let r = resolve(&args)?;
            let _ = writeln!(stderr, "seed: {}", r.scenario.sim.seed);
            cmd_pipeline(&r, stdout)
        }
    }
}

/// Simulates and writes `<stem>_<i>.csv/.decls/.dtrace` for every run.
/// Successful runs are written even when others fail.
pub fn cmd_simulate(r: &Resolved, stdout: &mut dyn Write) -> Result<SuiteOutput, CliError> {
    ensure_dir(&r.out)?;
    let suite = r.scenario.simulate()?;
    let mut decls = Vec::new();
    write_decls(&suite.ppts, &mut decls).map_err(|e| CliError::Config(e.to_string()))?;
    let mut failed = Vec::new();
    for (i, run) in suite.runs.iter().enumerate() {
        let run = match run {
            Ok(run) => run,
            Err(e) => {
                failed.push(format!("run {i}: {e}"));
                continue;
            }
        };
        let base = r.out.join(format!("{}_{i}", r.stem));
        let mut csv = Vec::new();
        write_csv(&r.scenario.model.composed, &run.execution, &mut csv).map_err(|e| CliError::Sim(e.to_string()))?;
        write(&base.with_extension("csv"), &csv)?;
        write(&base.with_extension("decls"), &decls)?;
        let mut dtrace = Vec::new();
        write_dtrace(&run.records, &suite.ppts, &mut dtrace).map_err(|e| CliError::Sim(e.to_string()))?;
        write(&base.with_extension("dtrace"), &dtrace)?;
    }
    let ok = suite.runs.len() - failed.len();
    let _ = writeln!(stdout, "{}: {ok} of {} runs written to {}", r.scenario.id, suite.runs.len(), r.out.display());
    if !failed.is_empty() {
        return Err(CliError::Sim(format!("simulation failed:\n  {}", failed.join("\n  "))));
    }
    Ok(suite)
}

fn write_inference(out: &Path, stem: &str, inf: &Inference) -> Result<(), CliError> {
    write(&out.join(format!("{stem}.inv.txt")), inf.to_text().as_bytes())?;
    let json = serde_json::to_string_pretty(inf).expect("inference serializes");
    write(&out.join(format!("{stem}.inv.json")), json.as_bytes())
}

fn load_traces(path: &Path) -> Result<TraceSet, CliError> {
    let decls_path = path.with_extension("decls");
    let ppts = read_decls(&read(&decls_path)?).map_err(|e| parse_err(&decls_path, e))?;
    let records = read_dtrace(&read(path)?, &ppts).map_err(|e| parse_err(path, e))?;
    Ok(TraceSet { ppts, records })
}

pub fn cmd_infer(args: &InferArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = match &args.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let scenario = match args.scenario.as_deref().or(cfg.scenario.as_deref()) {
        Some(id) => Some(cases::scenario(id)?),
        None => None,
    };
    let inference = cfg
        .inference
        .clone()
        .or_else(|| scenario.as_ref().map(|s| s.inference.clone()))
        .unwrap_or_default();
    inference.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let traces: Vec<TraceSet> = args.traces.iter().map(|p| load_traces(p)).collect::<Result<_, _>>()?;

    let mut splitter = cfg
        .splitter
        .clone()
        .or_else(|| scenario.as_ref().map(|s| s.splitter.clone()))
        .unwrap_or_default();
    splitter.ts = match (args.ts, &cfg.steady_state, &scenario) {
        (Some(ts), _, _) => Some(ts),
        (None, Some(SteadyState::Fixed(ts)), _) => Some(*ts),
        (None, Some(_), _) => return Err(CliError::Config("infer only supports a fixed steady_state".into())),
        (None, None, Some(s)) => Some(s.steady_state_time(&traces)),
        (None, None, None) => splitter.ts,
    };
    if let Some(ts) = splitter.ts {
        let _ = writeln!(stdout, "steady-state time: {ts}");
    }
    let raw: Vec<InvariantSet> = traces
        .iter()
        .map(|t| infer::infer_conditional_raw(t, &splitter, &inference))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(e.to_string()))?;

    ensure_dir(&args.out)?;
    for (path, set) in args.traces.iter().zip(&raw) {
        let stem = path.file_stem().map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
        write_inference(&args.out, &stem, &set.finalize(&inference))?;
    }
    let merged = infer::merge(&raw, &inference).finalize(&inference);
    write_inference(&args.out, "merged", &merged)?;
    let _ = write!(stdout, "{}", merged.to_text());
    Ok(())
}

fn load_invariants(path: &Path) -> Result<Vec<CandidateInvariant>, CliError> {
    let text = read(path)?;
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        let inf: Inference = serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
        Ok(inf.invariants)
    } else if trimmed.starts_with('[') {
        serde_json::from_str(&text).map_err(|e| parse_err(path, e))
    } else {
        infer::parse_invariants(&text).map_err(|e| parse_err(path, e))
    }
}

fn write_reports(out: &Path, reports: &[MismatchReport]) -> Result<String, CliError> {
    ensure_dir(out)?;
    let table = MismatchReport::to_table(reports);
    write(&out.join("report.txt"), table.as_bytes())?;
    write(&out.join("report.csv"), MismatchReport::to_csv(reports).as_bytes())?;
    write(&out.join("report.json"), MismatchReport::to_json(reports).as_bytes())?;
    Ok(table)
}

fn verdict(report: &MismatchReport, strict: bool) -> Result<(), CliError> {
    let flagged: Vec<&str> = report.specs.iter().filter(|s| s.mismatch).map(|s| s.spec.as_str()).collect();
    if !flagged.is_empty() {
        return Err(CliError::Mismatch(format!(
            "{}: specification mismatch for {}",
            report.scenario,
            flagged.join(", ")
        )));
    }
    if strict && report.any_incomparable() {
        return Err(CliError::Mismatch(format!(
            "{}: incomparable entries under --strict",
            report.scenario
        )));
    }
    Ok(())
}

pub fn cmd_check(args: &CheckArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let invariants = load_invariants(&args.invariants)?;
    let specs = load_spec_file(&args.specs)?;
    let name = args.scenario.clone().unwrap_or_else(|| {
        args.invariants
            .file_stem()
            .map_or_else(|| "invariants".into(), |s| s.to_string_lossy().into_owned())
    });
    let report = detect_mismatch(&name, &invariants, &specs);
    let table = write_reports(&args.out, std::slice::from_ref(&report))?;
    let _ = write!(stdout, "{table}");
    verdict(&report, args.strict)
}

/// Long-format series for every scalar recorded at a point that carries a
/// specified variable: `run,t,series,value`.
fn plot_series(ppts_records: &[(usize, &TraceSet)], specs: &[PhysSpec]) -> String {
    let spec_vars: Vec<&str> = specs.iter().flat_map(|s| s.body.iter().map(|b| b.var.as_str())).collect();
    let mut out = String::from("run,t,series,value\n");
    for (run, ts) in ppts_records {
        let wanted: BTreeMap<&str, Vec<(usize, &str)>> = ts
            .ppts
            .iter()
            .filter(|p| p.variables.iter().any(|v| spec_vars.iter().any(|s| cpspec::spec::same_var(&v.name, s))))
            .map(|p| {
                let cols = p
                    .variables
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.name != "t")
                    .map(|(i, v)| (i, v.name.as_str()))
                    .collect();
                (p.name.as_str(), cols)
            })
            .collect();
        for rec in &ts.records {
            let Some(cols) = wanted.get(rec.ppt.as_str()) else {
                continue;
            };
            let Some(t) = time_of(rec, ts) else {
                continue;
            };
            for (i, name) in cols {
                if let Some(x) = rec.values[*i].0.as_scalar() {
                    let _ = writeln!(out, "{run},{t:?},{}.{name},{x:?}", rec.ppt);
                }
            }
        }
    }
    out
}

fn time_of(rec: &TraceRecord, ts: &TraceSet) -> Option<f64> {
    let p = ts.ppts.iter().find(|p| p.name == rec.ppt)?;
    rec.values[p.var_position("t")?].0.as_scalar()
}

/// One row per specified interval, with the guard it applies under.
fn plot_bands(specs: &[PhysSpec]) -> String {
    let mut out = String::from("spec,var,lo,hi,guard\n");
    for s in specs {
        let f = s.formula();
        let guard = if f.guard.is_trivial() { String::new() } else { f.guard.to_string() };
        for b in &s.body {
            let _ = writeln!(out, "{},{},{:?},{:?},{guard}", s.name, b.var, b.lo, b.hi);
        }
    }
    out
}

pub fn cmd_pipeline(r: &Resolved, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut scenario = r.scenario.clone();
    if let Some(p) = &r.specs_path {
        scenario.specs = load_spec_file(p)?;
    }
    let suite = cmd_simulate(r, stdout)?;
    let traces = suite.trace_sets();
    let analysis = scenario.analyze(&traces).map_err(|e| match e {
        CaseError::Infer(e) => CliError::Config(e.to_string()),
        e => e.into(),
    })?;
    let _ = writeln!(stdout, "steady-state time: {}", analysis.ts);
    for (i, inf) in analysis.per_run.iter().enumerate() {
        write_inference(&r.out, &format!("{}_{i}", r.stem), inf)?;
    }
    write_inference(&r.out, &format!("{}_merged", r.stem), &analysis.merged)?;
    let projected = Inference {
        invariants: analysis.projected.clone(),
        no_judgment: vec![],
    };
    write_inference(&r.out, &format!("{}_projected", r.stem), &projected)?;

    let indexed: Vec<(usize, &TraceSet)> = traces.iter().enumerate().collect();
    write(&r.out.join("plot_series.csv"), plot_series(&indexed, &analysis.specs).as_bytes())?;
    write(&r.out.join("plot_bands.csv"), plot_bands(&analysis.specs).as_bytes())?;

    let table = write_reports(&r.out, std::slice::from_ref(&analysis.report))?;
    let _ = write!(stdout, "{table}");
    verdict(&analysis.report, r.strict)
}
