//! Fixtures shared by the benchmarks.

use lanecov_core::concretize::{concretize, ConcretizeOptions, ConcreteScenario};
use lanecov_core::rational::q;
use lanecov_core::search::{find_witness, SearchConfig};
use lanecov_core::{ModelParams, ScenarioSpec};

/// The two-phase cut-in scenario used throughout the benches.
pub fn cut_in_spec() -> ScenarioSpec {
    ScenarioSpec::parse_inline("2,2->6,4").expect("valid inline spec")
}

/// Level-offset concrete scenario of [`cut_in_spec`].
pub fn cut_in_scenario() -> ConcreteScenario {
    let p = ModelParams::default();
    let trace = find_witness(&cut_in_spec(), &p, &SearchConfig::default_for(&p)).expect("witness");
    concretize(&trace, q(0), &p, &ConcretizeOptions::default()).expect("concretizes")
}
