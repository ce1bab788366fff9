use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use lanecov_bench::{cut_in_scenario, cut_in_spec};
use lanecov_core::campaign::{run_campaign, CampaignConfig};
use lanecov_core::catalog::default_catalog;
use lanecov_core::monitor::monitor;
use lanecov_core::search::{exhaustive_reach, find_witness, SearchConfig};
use lanecov_core::sim::{self, EgoAgentSpec, SimConfig};
use lanecov_core::{GridBounds, ModelParams};

fn search(c: &mut Criterion) {
    let p = ModelParams::default();
    let cfg = SearchConfig::default_for(&p);
    let spec = cut_in_spec();
    c.bench_function("find_witness/c22_64", |b| b.iter(|| find_witness(black_box(&spec), &p, &cfg).unwrap()));

    let mut g = c.benchmark_group("exhaustive_reach");
    g.sample_size(10);
    for depth in [4u32, 6] {
        let mut coarse = SearchConfig::coarse(&p, depth);
        coarse.node_budget = 5_000_000;
        g.bench_with_input(BenchmarkId::from_parameter(depth), &depth, |b, &d| {
            b.iter(|| exhaustive_reach(&p, &coarse, d).unwrap())
        });
    }
    g.finish();
}

fn simulate(c: &mut Criterion) {
    let scenario = cut_in_scenario();
    let cfg = SimConfig::default();
    let spec = cut_in_spec();
    for agent in ["oracle", "faulty:0.3:0.5"] {
        let a = EgoAgentSpec::parse(agent).unwrap();
        c.bench_function(&format!("sim/{agent}"), |b| b.iter(|| sim::run(black_box(&scenario), &a, &cfg).unwrap()));
    }
    let trace = sim::run(&scenario, &EgoAgentSpec::OracleACC, &cfg).unwrap();
    c.bench_function("monitor", |b| b.iter(|| monitor(black_box(&trace), &spec, 0.0, &GridBounds::concrete())));
}

fn campaign(c: &mut Criterion) {
    let catalog = default_catalog();
    let mut g = c.benchmark_group("campaign");
    g.sample_size(10);
    for jobs in [1usize, 4] {
        let mut cfg = CampaignConfig::new(ModelParams::default(), EgoAgentSpec::parse("faulty:0.3:0.5").unwrap(), 42);
        cfg.jobs = Some(jobs);
        g.bench_with_input(BenchmarkId::new("default_catalog", jobs), &jobs, |b, _| b.iter(|| run_campaign(&catalog, &cfg)));
    }
    g.finish();
}

criterion_group!(benches, search, simulate, campaign);
criterion_main!(benches);
