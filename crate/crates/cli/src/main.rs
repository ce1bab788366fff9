mod config;

use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lanecov_core::campaign::{self, CampaignConfig, ReportFormat};
use lanecov_core::catalog::{default_catalog, parse_scenario_dsl};
use lanecov_core::concretize::{concretize_all, emit_scenario_file, export_scenariorunner_script, parse_scenario_file};
use lanecov_core::monitor::{self, Outcome};
use lanecov_core::search::{find_witness, read_trace_jsonl, validate_trace, write_trace_jsonl};
use lanecov_core::sim::{self, EgoAgentSpec};
use lanecov_core::{ScenarioCatalog, ScenarioSpec};

use config::{Config, DEFAULT_OUTPUT_DIR};

#[derive(Parser)]
#[command(name = "lanecov", version, about = "Generate, simulate and monitor highway coverage scenarios")]
struct Cli {
    /// TOML configuration file (see README for keys).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory. Falls back to the config file, then `lanecov-out`.
    #[arg(long, global = true, env = "LANECOV_OUT_DIR", value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search abstract witness traces; writes `traces/<spec_id>.jsonl`.
    Generate {
        /// Inline scenario `a1,a2->b1,b2`; repeatable. Overrides --catalog.
        #[arg(long, value_name = "SPEC")]
        spec: Vec<String>,
        /// `default` or a scenario DSL file.
        #[arg(long, value_name = "CATALOG")]
        catalog: Option<String>,
        /// Search depth bound.
        #[arg(long)]
        max_steps: Option<u32>,
    },
    /// Turn a witness into one scenario per offset; writes
    /// `scenarios/<scenario_id>.json`.
    Concretize {
        /// Abstract trace produced by `generate`.
        #[arg(long, value_name = "FILE")]
        trace: PathBuf,
        /// Also write a ScenarioRunner-style Python script per scenario.
        #[arg(long)]
        scripts: bool,
    },
    /// Run one scenario; writes `runs/<scenario_id>.csv` and
    /// `runs/<scenario_id>.events.json`.
    Simulate {
        /// Scenario file produced by `concretize`.
        #[arg(long, value_name = "FILE")]
        scenario: PathBuf,
        /// `oracle` or `faulty:<dropout>:<latency>`.
        #[arg(long)]
        agent: Option<String>,
        /// Root seed; the run seed is derived from it and the scenario id.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Classify a trace against a scenario; writes
    /// `verdicts/<name>.json` and prints the verdict.
    Monitor {
        /// Trace CSV, from `simulate` or another simulator.
        #[arg(long, value_name = "FILE")]
        trace: PathBuf,
        /// Collision sidecar. Without it collisions are recomputed from
        /// the trace geometry.
        #[arg(long, value_name = "FILE")]
        events: Option<PathBuf>,
        /// Inline scenario `a1,a2->b1,b2`.
        #[arg(long, value_name = "SPEC")]
        spec: String,
        /// Initial offset of the run in metres, recorded in the verdict.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        offset: f64,
    },
    /// Full pipeline over a catalog; writes `report.json`, `coverage.csv`
    /// and `verdicts.jsonl`.
    Campaign {
        /// `default` or a scenario DSL file.
        #[arg(long, value_name = "CATALOG")]
        catalog: Option<String>,
        /// `oracle` or `faulty:<dropout>:<latency>`.
        #[arg(long)]
        agent: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long, value_name = "N")]
        jobs: Option<usize>,
        /// Also write coverage.svg and one x-t diagram per run.
        #[arg(long)]
        svg: bool,
        /// Exit with status 3 when any run is CoverOkPropFail.
        #[arg(long)]
        fail_on_violation: bool,
    },
    /// Render a saved report.
    Export {
        /// `report.json` from `campaign`.
        #[arg(long, value_name = "FILE")]
        report: PathBuf,
        /// Output formats; repeatable.
        #[arg(long, value_enum, default_value = "csv")]
        format: Vec<ExportFormat>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormat {
    Csv,
    Svg,
    Json,
}

/// Failure of one pipeline stage.
#[derive(Debug)]
struct StageError {
    stage: &'static str,
    message: String,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.stage, self.message)
    }
}

fn stage<E: fmt::Display>(stage: &'static str) -> impl Fn(E) -> StageError {
    move |e| StageError { stage, message: e.to_string() }
}

type Res<T> = Result<T, StageError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Res<ExitCode> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p).map_err(stage("config"))?,
        None => Config::default(),
    };
    let out = cli.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    match cli.command {
        Command::Generate { spec, catalog, max_steps } => generate(&cfg, &out, &spec, catalog, max_steps),
        Command::Concretize { trace, scripts } => concretize(&cfg, &out, &trace, scripts),
        Command::Simulate { scenario, agent, seed } => simulate(&cfg, &out, &scenario, agent, seed),
        Command::Monitor { trace, events, spec, offset } => monitor_cmd(&cfg, &out, &trace, events, &spec, offset),
        Command::Campaign { catalog, agent, seed, jobs, svg, fail_on_violation } => {
            campaign_cmd(cfg, &out, catalog, agent, seed, jobs, svg, fail_on_violation)
        }
        Command::Export { report, format } => export(&out, &report, &format),
    }
}

fn load_catalog(name: &str) -> Res<ScenarioCatalog> {
    if name == "default" {
        return Ok(default_catalog());
    }
    let text = fs::read_to_string(name).map_err(|e| StageError { stage: "catalog", message: format!("{name}: {e}") })?;
    parse_scenario_dsl(&text).map_err(|e| StageError { stage: "catalog", message: format!("{name}: {e}") })
}

fn parse_agent(text: Option<String>, cfg: &Config) -> Res<EgoAgentSpec> {
    match text {
        Some(t) => EgoAgentSpec::parse(&t).map_err(stage("config")),
        None => Ok(cfg.agent.clone()),
    }
}

fn create_dir(dir: &Path, at: &'static str) -> Res<()> {
    fs::create_dir_all(dir).map_err(|e| StageError { stage: at, message: format!("{}: {e}", dir.display()) })
}

fn write_file(path: &Path, contents: &str, at: &'static str) -> Res<()> {
    fs::write(path, contents).map_err(|e| StageError { stage: at, message: format!("{}: {e}", path.display()) })?;
    println!("{}", path.display());
    Ok(())
}

fn open(path: &Path, at: &'static str) -> Res<File> {
    File::open(path).map_err(|e| StageError { stage: at, message: format!("{}: {e}", path.display()) })
}

fn generate(cfg: &Config, out: &Path, specs: &[String], catalog: Option<String>, max_steps: Option<u32>) -> Res<ExitCode> {
    let catalog = if specs.is_empty() {
        load_catalog(catalog.as_deref().unwrap_or(&cfg.catalog))?
    } else {
        let parsed = specs.iter().map(|s| ScenarioSpec::parse_inline(s)).collect::<Result<Vec<_>, _>>();
        ScenarioCatalog::new(parsed.map_err(stage("generate"))?).map_err(stage("generate"))?
    };
    let mut search = cfg.search.clone();
    if let Some(n) = max_steps {
        search.max_steps = n;
    }
    let dir = out.join("traces");
    create_dir(&dir, "generate")?;
    let mut missing = Vec::new();
    for spec in catalog.specs() {
        let trace = match find_witness(spec, &cfg.params, &search) {
            Ok(t) => t,
            Err(e) => {
                missing.push(format!("{}: {e}", spec.id));
                continue;
            }
        };
        let report = validate_trace(&trace, spec, &cfg.params);
        if let Some(d) = report.first() {
            return Err(StageError { stage: "generate", message: format!("{}: invalid witness: {d:?}", spec.id) });
        }
        let mut buf = Vec::new();
        write_trace_jsonl(&mut buf, &trace, spec, &cfg.params).map_err(stage("generate"))?;
        write_file(&dir.join(format!("{}.jsonl", spec.id)), &String::from_utf8(buf).expect("utf-8 json"), "generate")?;
    }
    eprintln!("found {}/{} witnesses", catalog.len() - missing.len(), catalog.len());
    if missing.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(StageError { stage: "generate", message: missing.join("; ") })
    }
}

fn concretize(cfg: &Config, out: &Path, trace_path: &Path, scripts: bool) -> Res<ExitCode> {
    let file = BufReader::new(open(trace_path, "concretize")?);
    let (header, spec, trace) = read_trace_jsonl(file).map_err(stage("concretize"))?;
    if header.params_hash != cfg.params.params_hash() {
        return Err(StageError {
            stage: "concretize",
            message: format!(
                "trace was generated with model parameters {} but the configuration has {}",
                header.params_hash,
                cfg.params.params_hash()
            ),
        });
    }
    if let Some(d) = validate_trace(&trace, &spec, &cfg.params).first() {
        return Err(StageError { stage: "concretize", message: format!("invalid witness: {d:?}") });
    }
    let scenarios = concretize_all(&trace, &cfg.params, &cfg.concretize).map_err(stage("concretize"))?;
    let dir = out.join("scenarios");
    create_dir(&dir, "concretize")?;
    for s in &scenarios {
        write_file(&dir.join(format!("{}.json", s.scenario_id)), &emit_scenario_file(s), "concretize")?;
        if scripts {
            write_file(&dir.join(format!("{}.py", s.scenario_id)), &export_scenariorunner_script(s), "concretize")?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn simulate(cfg: &Config, out: &Path, path: &Path, agent: Option<String>, seed: Option<u64>) -> Res<ExitCode> {
    let text = fs::read_to_string(path).map_err(|e| StageError { stage: "simulate", message: format!("{}: {e}", path.display()) })?;
    let scenario = parse_scenario_file(&text).map_err(stage("simulate"))?;
    let agent = parse_agent(agent, cfg)?;
    let run_seed = campaign::run_seed(seed.unwrap_or(cfg.seed), &scenario.spec_id, &scenario.offset);
    let sim_cfg = sim::SimConfig { rng_seed: run_seed, ..cfg.sim.clone() };
    let trace = sim::run(&scenario, &agent, &sim_cfg).map_err(stage("simulate"))?;

    let dir = out.join("runs");
    create_dir(&dir, "simulate")?;
    let csv_path = dir.join(format!("{}.csv", scenario.scenario_id));
    let ev_path = dir.join(format!("{}.events.json", scenario.scenario_id));
    let io_err = |p: &Path| {
        let p = p.display().to_string();
        move |e: std::io::Error| StageError { stage: "simulate", message: format!("{p}: {e}") }
    };
    let mut w = BufWriter::new(File::create(&csv_path).map_err(io_err(&csv_path))?);
    sim::write_trace_csv(&mut w, &trace).map_err(stage("simulate"))?;
    w.flush().map_err(io_err(&csv_path))?;
    println!("{}", csv_path.display());
    let mut w = BufWriter::new(File::create(&ev_path).map_err(io_err(&ev_path))?);
    sim::write_events_json(&mut w, &trace).map_err(stage("simulate"))?;
    w.flush().map_err(io_err(&ev_path))?;
    println!("{}", ev_path.display());
    eprintln!(
        "{}: {} samples, {} collision(s), frontal: {}",
        scenario.scenario_id,
        trace.samples.len(),
        trace.events.len(),
        trace.has_frontal_collision()
    );
    Ok(ExitCode::SUCCESS)
}

fn monitor_cmd(cfg: &Config, out: &Path, trace_path: &Path, events: Option<PathBuf>, spec: &str, offset: f64) -> Res<ExitCode> {
    let spec = ScenarioSpec::parse_inline(spec).map_err(stage("monitor"))?;
    let csv = BufReader::new(open(trace_path, "monitor")?);
    let mut trace = match &events {
        Some(p) => sim::read_trace(csv, Some(BufReader::new(open(p, "monitor")?))),
        None => sim::read_trace(csv, None::<File>),
    }
    .map_err(stage("monitor"))?;
    if events.is_none() {
        trace.events = sim::collision_events(&trace.samples, &cfg.sim);
    }
    let name = if trace.scenario_id.is_empty() {
        let stem = trace_path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace").to_string();
        trace.scenario_id = stem.clone();
        stem
    } else {
        trace.scenario_id.clone()
    };
    let verdict = monitor::monitor(&trace, &spec, offset, &lanecov_core::GridBounds::concrete());
    let json = serde_json::to_string_pretty(&verdict).expect("verdict serializes") + "\n";
    let dir = out.join("verdicts");
    create_dir(&dir, "monitor")?;
    write_file(&dir.join(format!("{name}.json")), &json, "monitor")?;
    print!("{json}");
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn campaign_cmd(
    cfg: Config,
    out: &Path,
    catalog: Option<String>,
    agent: Option<String>,
    seed: Option<u64>,
    jobs: Option<usize>,
    svg: bool,
    fail_on_violation: bool,
) -> Res<ExitCode> {
    let catalog_name = catalog.unwrap_or_else(|| cfg.catalog.clone());
    let cat = load_catalog(&catalog_name)?;
    let agent = parse_agent(agent, &cfg)?;
    let mut cc = CampaignConfig::new(cfg.params.clone(), agent, seed.unwrap_or(cfg.seed));
    cc.search = cfg.search.clone();
    cc.sim = cfg.sim.clone();
    cc.concretize = cfg.concretize.clone();
    cc.jobs = jobs.or(cfg.jobs);
    cc.catalog_label = catalog_name;
    let output = campaign::run_campaign_with_runs(&cat, &cc, true);

    let runs: Vec<_> = output.runs.iter().map(|r| (r.trace.clone(), r.verdict.clone())).collect();
    let mut formats = vec![ReportFormat::Json, ReportFormat::Csv];
    if svg {
        formats.push(ReportFormat::Svg);
    }
    let written = campaign::emit_report(&output.report, &runs, out, &formats).map_err(stage("report"))?;
    let verdicts: Vec<_> = output.runs.iter().map(|r| r.verdict.clone()).collect();
    let vpath = out.join("verdicts.jsonl");
    let mut buf = Vec::new();
    monitor::write_verdicts_jsonl(&mut buf, &verdicts).map_err(stage("report"))?;
    fs::write(&vpath, buf).map_err(stage("report"))?;
    for p in written.iter().filter(|p| p.parent() == Some(out)).chain([&vpath]) {
        println!("{}", p.display());
    }
    eprint!("{}", campaign::report_csv(&output.report));
    for (o, n) in &output.report.outcome_counts {
        eprintln!("{o}: {n}");
    }
    if fail_on_violation && output.report.outcome_counts.get(&Outcome::CoverOkPropFail).copied().unwrap_or(0) > 0 {
        eprintln!("error[campaign]: CoverOkPropFail runs present");
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn export(out: &Path, report_path: &Path, formats: &[ExportFormat]) -> Res<ExitCode> {
    let text = fs::read_to_string(report_path)
        .map_err(|e| StageError { stage: "export", message: format!("{}: {e}", report_path.display()) })?;
    let report = campaign::parse_report_json(&text).map_err(stage("export"))?;
    create_dir(out, "export")?;
    for f in formats {
        match f {
            ExportFormat::Csv => write_file(&out.join("coverage.csv"), &campaign::report_csv(&report), "export")?,
            ExportFormat::Svg => write_file(&out.join("coverage.svg"), &campaign::render_coverage_svg(&report), "export")?,
            ExportFormat::Json => write_file(&out.join("report.json"), &campaign::report_json(&report), "export")?,
        }
    }
    Ok(ExitCode::SUCCESS)
}
