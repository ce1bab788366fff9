use lanecov_core::campaign::{emit_report, parse_report_json, run_campaign_with_runs, CampaignConfig, ReportFormat};
use lanecov_core::concretize::{concretize_all, emit_scenario_file, parse_scenario_file, ConcretizeOptions};
use lanecov_core::monitor::monitor;
use lanecov_core::search::{find_witness, read_trace_jsonl, write_trace_jsonl, SearchConfig};
use lanecov_core::sim::{self, EgoAgentSpec, SimConfig};
use lanecov_core::{GridBounds, GridConfig, ModelParams, ScenarioCatalog, ScenarioSpec};

fn spec() -> ScenarioSpec {
    ScenarioSpec::parse_inline("2,2->6,4").unwrap()
}

#[test]
fn file_round_trips_preserve_the_verdict() {
    let p = ModelParams::default();
    let spec = spec();
    let trace = find_witness(&spec, &p, &SearchConfig::default_for(&p)).unwrap();

    let mut buf = Vec::new();
    write_trace_jsonl(&mut buf, &trace, &spec, &p).unwrap();
    let (header, spec_back, trace_back) = read_trace_jsonl(buf.as_slice()).unwrap();
    assert_eq!(header.params_hash, p.params_hash());
    assert_eq!((spec_back.first, spec_back.second), (spec.first, spec.second));
    assert_eq!(trace_back.states, trace.states);

    let agent = EgoAgentSpec::parse("faulty:1.0:0").unwrap();
    for scenario in concretize_all(&trace_back, &p, &ConcretizeOptions::default()).unwrap() {
        let scenario = parse_scenario_file(&emit_scenario_file(&scenario)).unwrap();
        let run = sim::run(&scenario, &agent, &SimConfig::default()).unwrap();
        let direct = monitor(&run, &spec, 0.0, &GridBounds::concrete());

        let (mut csv, mut events) = (Vec::new(), Vec::new());
        sim::write_trace_csv(&mut csv, &run).unwrap();
        sim::write_events_json(&mut events, &run).unwrap();
        let loaded = sim::read_trace(csv.as_slice(), Some(events.as_slice())).unwrap();
        let from_files = monitor(&loaded, &spec, 0.0, &GridBounds::concrete());
        assert_eq!(from_files.outcome, direct.outcome, "{}", scenario.scenario_id);

        // Recomputing collisions from the written geometry agrees too.
        assert_eq!(sim::collision_events(&loaded.samples, &SimConfig::default()).len(), run.events.len());
    }
}

#[test]
fn report_files_are_written_and_readable() {
    let dir = tempfile::tempdir().unwrap();
    let catalog = ScenarioCatalog::new(vec![
        spec(),
        ScenarioSpec::canonical(GridConfig::from_numbers(4, 5).unwrap(), GridConfig::from_numbers(2, 2).unwrap()),
    ])
    .unwrap();
    let mut cfg = CampaignConfig::new(ModelParams::default(), EgoAgentSpec::OracleACC, 3);
    cfg.jobs = Some(2);
    let out = run_campaign_with_runs(&catalog, &cfg, true);
    assert_eq!(out.runs.len(), 6);
    let runs: Vec<_> = out.runs.iter().map(|r| (r.trace.clone(), r.verdict.clone())).collect();
    let written = emit_report(&out.report, &runs, dir.path(), &[ReportFormat::Json, ReportFormat::Csv, ReportFormat::Svg]).unwrap();
    assert_eq!(written.len(), 3 + 6);

    let back = parse_report_json(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(back, out.report);
    let csv = std::fs::read_to_string(dir.path().join("coverage.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    let svg = std::fs::read_to_string(dir.path().join("svg/c22_64_level.svg")).unwrap();
    assert!(svg.contains("phase A"));

    let union = &out.report.union_row;
    for row in &out.report.rows {
        assert!(row.coverage_ok <= union.coverage_ok && row.property_fail <= union.property_fail);
        assert!(row.cover_ok_and_prop_fail <= row.coverage_ok.min(row.property_fail));
    }
}
