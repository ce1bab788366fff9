//! End-to-end campaigns: search, concretize for every offset, simulate,
//! monitor, and aggregate coverage into per-offset rows and a union row.

mod svg;

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use svg::{render_coverage_svg, render_run_svg};

use crate::catalog::{ScenarioCatalog, ScenarioSpec};
use crate::concretize::{concretize, offset_tag, offsets, ConcreteScenario, ConcretizeOptions};
use crate::model::grid::GridBounds;
use crate::model::ModelParams;
use crate::monitor::{monitor, MonitorVerdict, Outcome};
use crate::rational::{fmt_decimal, to_f64, Q};
use crate::search::{find_witness, SearchConfig};
use crate::sim::{self, ConcreteTrace, EgoAgentSpec, SimConfig};

#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub params: ModelParams,
    pub search: SearchConfig,
    pub sim: SimConfig,
    pub agent: EgoAgentSpec,
    pub concretize: ConcretizeOptions,
    /// Bounds for mapping simulated traces onto the grid.
    pub monitor_bounds: GridBounds,
    /// Root seed; every run gets a seed derived from it, the spec id and
    /// the offset.
    pub seed: u64,
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
    /// Free-form catalog label recorded in the report.
    pub catalog_label: String,
}

impl CampaignConfig {
    pub fn new(params: ModelParams, agent: EgoAgentSpec, seed: u64) -> Self {
        Self {
            search: SearchConfig::default_for(&params),
            sim: SimConfig::from_params(&params),
            params,
            agent,
            concretize: ConcretizeOptions::default(),
            monitor_bounds: GridBounds::concrete(),
            seed,
            jobs: None,
            catalog_label: "default".into(),
        }
    }
}

/// One column set of the coverage table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub label: String,
    pub total: usize,
    pub coverage_ok: usize,
    pub property_fail: usize,
    pub cover_ok_and_prop_fail: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDetail {
    pub scenario_id: String,
    pub offset: f64,
    pub seed: u64,
    /// `None` when the run could not be simulated.
    pub outcome: Option<Outcome>,
    pub phase_times: Option<(f64, f64)>,
    pub first_violation_t: Option<f64>,
    pub collisions: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecDetail {
    pub first: [u8; 2],
    pub second: [u8; 2],
    pub found: bool,
    pub witness_steps: Option<usize>,
    pub error: Option<String>,
    pub runs: Vec<RunDetail>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractGeneration {
    pub total: usize,
    pub found: usize,
    pub coverage_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub tool_version: String,
    pub params_hash: String,
    pub agent: EgoAgentSpec,
    pub agent_label: String,
    pub seed: u64,
    pub search_rng_seed: u64,
    pub search_max_steps: u32,
    pub search_node_budget: usize,
    pub sim: SimConfig,
    pub catalog: String,
    pub catalog_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub metadata: ReportMetadata,
    pub abstract_generation: AbstractGeneration,
    /// One row per offset, in [`offsets`] order.
    pub rows: Vec<CoverageRow>,
    pub union_row: CoverageRow,
    pub outcome_counts: BTreeMap<Outcome, usize>,
    pub specs: BTreeMap<String, SpecDetail>,
}

/// Everything produced by one simulated run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub scenario: ConcreteScenario,
    pub trace: ConcreteTrace,
    pub verdict: MonitorVerdict,
}

pub struct CampaignOutput {
    pub report: CampaignReport,
    /// Empty unless runs were requested.
    pub runs: Vec<RunArtifacts>,
}

/// Seed of one run, independent of scheduling order.
pub fn run_seed(root: u64, spec_id: &str, offset: &Q) -> u64 {
    let digest = Sha256::digest(format!("{root}/{spec_id}/{}", offset_tag(offset)).as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

struct SpecResult {
    detail: SpecDetail,
    runs: Vec<RunArtifacts>,
}

fn run_spec(spec: &ScenarioSpec, cfg: &CampaignConfig, keep_runs: bool) -> SpecResult {
    let mut detail = SpecDetail {
        first: spec.first.numbers(),
        second: spec.second.numbers(),
        found: false,
        witness_steps: None,
        error: None,
        runs: vec![],
    };
    let trace = match find_witness(spec, &cfg.params, &cfg.search) {
        Ok(t) => t,
        Err(e) => {
            detail.error = Some(format!("search: {e}"));
            return SpecResult { detail, runs: vec![] };
        }
    };
    detail.found = true;
    detail.witness_steps = Some(trace.len());
    let mut runs = Vec::new();
    for offset in offsets() {
        let seed = run_seed(cfg.seed, &spec.id, &offset);
        let scenario_id = format!("{}_{}", spec.id, offset_tag(&offset));
        let mut run = RunDetail {
            scenario_id: scenario_id.clone(),
            offset: to_f64(&offset),
            seed,
            outcome: None,
            phase_times: None,
            first_violation_t: None,
            collisions: 0,
            error: None,
        };
        let simulated = concretize(&trace, offset, &cfg.params, &cfg.concretize)
            .map_err(|e| format!("concretize: {e}"))
            .and_then(|scenario| {
                let sim_cfg = SimConfig { rng_seed: seed, ..cfg.sim.clone() };
                sim::run(&scenario, &cfg.agent, &sim_cfg).map(|t| (scenario, t)).map_err(|e| format!("simulate: {e}"))
            });
        match simulated {
            Ok((scenario, t)) => {
                let verdict = monitor(&t, spec, run.offset, &cfg.monitor_bounds);
                run.outcome = Some(verdict.outcome);
                run.phase_times = verdict.phase_times;
                run.first_violation_t = verdict.first_violation_t;
                run.collisions = t.events.len();
                if keep_runs {
                    runs.push(RunArtifacts { scenario, trace: t, verdict });
                }
            }
            Err(e) => run.error = Some(e),
        }
        detail.runs.push(run);
    }
    SpecResult { detail, runs }
}

fn offset_label(offset: &Q) -> String {
    format!("{} ({} m)", offset_tag(offset), fmt_decimal(offset))
}

fn tally(row: &mut CoverageRow, outcomes: impl Iterator<Item = Option<Outcome>>) {
    let (mut ok, mut fail, mut both) = (false, false, false);
    for o in outcomes.flatten() {
        ok |= o.compliance();
        fail |= !o.property_ok();
        both |= o == Outcome::CoverOkPropFail;
    }
    row.coverage_ok += ok as usize;
    row.property_fail += fail as usize;
    row.cover_ok_and_prop_fail += both as usize;
}

fn aggregate(specs: &BTreeMap<String, SpecDetail>, total: usize) -> (Vec<CoverageRow>, CoverageRow, BTreeMap<Outcome, usize>) {
    let offs = offsets();
    let mut rows: Vec<CoverageRow> =
        offs.iter().map(|o| CoverageRow { label: offset_label(o), total, ..Default::default() }).collect();
    let mut union = CoverageRow { label: "set union".into(), total, ..Default::default() };
    let mut counts: BTreeMap<Outcome, usize> = Outcome::ALL.iter().map(|o| (*o, 0)).collect();
    for d in specs.values() {
        for (k, row) in rows.iter_mut().enumerate() {
            tally(row, d.runs.get(k).map(|r| r.outcome).into_iter());
        }
        tally(&mut union, d.runs.iter().map(|r| r.outcome));
        for o in d.runs.iter().filter_map(|r| r.outcome) {
            *counts.get_mut(&o).expect("all outcomes present") += 1;
        }
    }
    (rows, union, counts)
}

/// Runs the whole pipeline on every spec of `catalog`. Per-spec failures
/// are recorded in the report; the campaign itself does not fail.
pub fn run_campaign_with_runs(catalog: &ScenarioCatalog, cfg: &CampaignConfig, keep_runs: bool) -> CampaignOutput {
    let work = || -> Vec<SpecResult> { catalog.specs().par_iter().map(|s| run_spec(s, cfg, keep_runs)).collect() };
    let results = match cfg.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map(|pool| pool.install(work))
            .unwrap_or_else(|_| work()),
        None => work(),
    };

    let mut specs = BTreeMap::new();
    let mut runs = Vec::new();
    for (spec, r) in catalog.specs().iter().zip(results) {
        specs.insert(spec.id.clone(), r.detail);
        runs.extend(r.runs);
    }
    runs.sort_by(|a, b| a.scenario.scenario_id.cmp(&b.scenario.scenario_id));

    let total = catalog.len();
    let found = specs.values().filter(|d| d.found).count();
    let (rows, union_row, outcome_counts) = aggregate(&specs, total);
    let report = CampaignReport {
        metadata: ReportMetadata {
            tool_version: crate::TOOL_VERSION.to_string(),
            params_hash: cfg.params.params_hash(),
            agent: cfg.agent.clone(),
            agent_label: cfg.agent.label(),
            seed: cfg.seed,
            search_rng_seed: cfg.search.rng_seed,
            search_max_steps: cfg.search.max_steps,
            search_node_budget: cfg.search.node_budget,
            sim: cfg.sim.clone(),
            catalog: cfg.catalog_label.clone(),
            catalog_size: total,
        },
        abstract_generation: AbstractGeneration {
            total,
            found,
            coverage_percent: if total == 0 { 0.0 } else { 100.0 * found as f64 / total as f64 },
        },
        rows,
        union_row,
        outcome_counts,
        specs,
    };
    CampaignOutput { report, runs }
}

pub fn run_campaign(catalog: &ScenarioCatalog, cfg: &CampaignConfig) -> CampaignReport {
    run_campaign_with_runs(catalog, cfg, false).report
}

/// Pretty JSON with a trailing newline. Map keys are sorted, so equal
/// reports give equal bytes.
pub fn report_json(report: &CampaignReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn parse_report_json(text: &str) -> Result<CampaignReport, serde_json::Error> {
    serde_json::from_str(text)
}

/// Coverage table: one row per offset and the union row.
pub fn report_csv(report: &CampaignReport) -> String {
    let mut out = String::from("row,total,coverage_ok,property_fail,cover_ok_and_prop_fail\n");
    for r in report.rows.iter().chain(std::iter::once(&report.union_row)) {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.label, r.total, r.coverage_ok, r.property_fail, r.cover_ok_and_prop_fail
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Svg,
}

/// Writes the requested formats into `dir`: `report.json`, `coverage.csv`,
/// and for SVG `coverage.svg` plus `svg/<scenario_id>.svg` for every run in
/// `runs`. Returns the paths written.
pub fn emit_report(
    report: &CampaignReport,
    runs: &[(ConcreteTrace, MonitorVerdict)],
    dir: &Path,
    formats: &[ReportFormat],
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for f in formats {
        match f {
            ReportFormat::Json => {
                let p = dir.join("report.json");
                fs::write(&p, report_json(report))?;
                written.push(p);
            }
            ReportFormat::Csv => {
                let p = dir.join("coverage.csv");
                fs::write(&p, report_csv(report))?;
                written.push(p);
            }
            ReportFormat::Svg => {
                let p = dir.join("coverage.svg");
                fs::write(&p, render_coverage_svg(report))?;
                written.push(p);
                let svg_dir = dir.join("svg");
                if !runs.is_empty() {
                    fs::create_dir_all(&svg_dir)?;
                }
                for (trace, verdict) in runs {
                    let p = svg_dir.join(format!("{}.svg", verdict.scenario_id));
                    fs::write(&p, render_run_svg(trace, verdict))?;
                    written.push(p);
                }
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::GridConfig;

    fn cfg() -> CampaignConfig {
        let mut c = CampaignConfig::new(ModelParams::default(), EgoAgentSpec::OracleACC, 1);
        c.jobs = Some(1);
        c
    }

    fn catalog(pairs: &[([u8; 2], [u8; 2])]) -> ScenarioCatalog {
        let specs = pairs
            .iter()
            .map(|(a, b)| {
                ScenarioSpec::canonical(GridConfig::from_numbers(a[0], a[1]).unwrap(), GridConfig::from_numbers(b[0], b[1]).unwrap())
            })
            .collect();
        ScenarioCatalog::new(specs).unwrap()
    }

    #[test]
    fn unreachable_spec_counts_nothing() {
        let mut c = cfg();
        c.search.max_steps = 2;
        let r = run_campaign(&catalog(&[([2, 2], [6, 4])]), &c);
        assert_eq!(r.abstract_generation.found, 0);
        assert_eq!(r.union_row.total, 1);
        assert_eq!((r.union_row.coverage_ok, r.union_row.property_fail), (0, 0));
        assert!(r.rows.iter().all(|row| row.total == 1 && row.coverage_ok == 0));
        assert!(r.specs["c22_64"].error.is_some());
    }

    #[test]
    fn csv_has_offset_rows_and_union() {
        let r = run_campaign(&catalog(&[([4, 5], [2, 2])]), &cfg());
        let csv = report_csv(&r);
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().last().unwrap().starts_with("set union,1,"));
        assert_eq!(parse_report_json(&report_json(&r)).unwrap(), r);
        let svg = render_coverage_svg(&r);
        assert_eq!(svg.matches(r#"class="bar""#).count(), 12);
    }

    #[test]
    fn union_is_existential_per_spec() {
        let mut specs = BTreeMap::new();
        let run = |o: Option<Outcome>| RunDetail {
            scenario_id: String::new(),
            offset: 0.0,
            seed: 0,
            outcome: o,
            phase_times: None,
            first_violation_t: None,
            collisions: 0,
            error: None,
        };
        specs.insert(
            "a".to_string(),
            SpecDetail {
                first: [4, 5],
                second: [2, 2],
                found: true,
                witness_steps: Some(3),
                error: None,
                runs: vec![run(Some(Outcome::CoverOkPropOk)), run(Some(Outcome::CoverFailPropFail)), run(None)],
            },
        );
        let (rows, union, counts) = aggregate(&specs, 2);
        assert_eq!((rows[0].coverage_ok, rows[0].property_fail), (1, 0));
        assert_eq!((rows[1].coverage_ok, rows[1].property_fail), (0, 1));
        assert_eq!((union.coverage_ok, union.property_fail, union.cover_ok_and_prop_fail), (1, 1, 0));
        assert_eq!(counts[&Outcome::CoverOkPropOk], 1);
        assert_eq!(counts.values().sum::<usize>(), 2);
    }

    #[test]
    fn run_seeds_differ_by_offset() {
        let [a, b, _] = offsets();
        assert_ne!(run_seed(1, "x", &a), run_seed(1, "x", &b));
        assert_eq!(run_seed(1, "x", &a), run_seed(1, "x", &a));
    }
}
