//! Execution monitor: maps a simulated trace back onto the grid, checks
//! that the two scenario phases occur in order, checks the no-frontal-crash
//! property and classifies the run.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::catalog::ScenarioSpec;
use crate::model::grid::{grid_cells_f64, CellSet, GridBounds};
use crate::model::VehicleId;
use crate::sim::{CollisionKind, ConcreteTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    CoverOkPropOk,
    CoverOkPropFail,
    CoverFailPropOk,
    CoverFailPropFail,
}

impl Outcome {
    pub const ALL: [Outcome; 4] =
        [Outcome::CoverOkPropOk, Outcome::CoverOkPropFail, Outcome::CoverFailPropOk, Outcome::CoverFailPropFail];

    pub fn compliance(self) -> bool {
        matches!(self, Outcome::CoverOkPropOk | Outcome::CoverOkPropFail)
    }

    pub fn property_ok(self) -> bool {
        matches!(self, Outcome::CoverOkPropOk | Outcome::CoverFailPropOk)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Grid observation of one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridObservation {
    pub t: f64,
    pub car1: CellSet,
    pub car2: CellSet,
}

/// Cell sets of both non-egos at every sample. Lanes are taken from the
/// trace, where they denote the lane whose center is nearest.
pub fn abstract_observation(trace: &ConcreteTrace, bounds: &GridBounds) -> Vec<GridObservation> {
    let b = bounds.to_f64();
    trace
        .samples
        .iter()
        .map(|s| {
            let ego = s.vehicle(VehicleId::Ego);
            let cells = |id| {
                let c = s.vehicle(id);
                grid_cells_f64(ego.lane, ego.x, c.lane, c.x, &b)
            };
            GridObservation { t: s.t, car1: cells(VehicleId::Car1), car2: cells(VehicleId::Car2) }
        })
        .collect()
}

/// Earliest `(t_A, t_B)` with `t_A < t_B`, the first configuration holding
/// at `t_A` and the second at `t_B`.
pub fn check_compliance(obs: &[GridObservation], spec: &ScenarioSpec) -> (bool, Option<(f64, f64)>) {
    let hit = spec.objective().earliest_witness(obs.iter().map(|o| (o.car1, o.car2)));
    match hit {
        Some((a, b)) => (true, Some((obs[a].t, obs[b].t))),
        None => (false, None),
    }
}

/// True iff the trace has no frontal collision.
pub fn check_property(trace: &ConcreteTrace) -> bool {
    !trace.has_frontal_collision()
}

pub fn classify(compliance: bool, property_ok: bool) -> Outcome {
    match (compliance, property_ok) {
        (true, true) => Outcome::CoverOkPropOk,
        (true, false) => Outcome::CoverOkPropFail,
        (false, true) => Outcome::CoverFailPropOk,
        (false, false) => Outcome::CoverFailPropFail,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorVerdict {
    pub scenario_id: String,
    pub spec_id: String,
    pub offset: f64,
    pub compliance: bool,
    pub property_ok: bool,
    pub outcome: Outcome,
    pub first_violation_t: Option<f64>,
    pub phase_times: Option<(f64, f64)>,
}

/// Full verdict for one run, evaluated under `bounds`.
pub fn monitor(trace: &ConcreteTrace, spec: &ScenarioSpec, offset: f64, bounds: &GridBounds) -> MonitorVerdict {
    let obs = abstract_observation(trace, bounds);
    let (compliance, phase_times) = check_compliance(&obs, spec);
    let property_ok = check_property(trace);
    MonitorVerdict {
        scenario_id: trace.scenario_id.clone(),
        spec_id: spec.id.clone(),
        offset,
        compliance,
        property_ok,
        outcome: classify(compliance, property_ok),
        first_violation_t: trace.events.iter().find(|e| e.kind == CollisionKind::FrontalCollision).map(|e| e.t),
        phase_times,
    }
}

/// One JSON object per line.
pub fn write_verdicts_jsonl<W: Write>(mut out: W, verdicts: &[MonitorVerdict]) -> std::io::Result<()> {
    for v in verdicts {
        serde_json::to_writer(&mut out, v)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::GridConfig;
    use crate::model::grid::GridCell;

    fn obs(t: f64, c1: GridCell, c2: GridCell) -> GridObservation {
        GridObservation { t, car1: [c1].into_iter().collect(), car2: [c2].into_iter().collect() }
    }

    fn spec() -> ScenarioSpec {
        ScenarioSpec::canonical(GridConfig::from_numbers(2, 2).unwrap(), GridConfig::from_numbers(6, 4).unwrap())
    }

    #[test]
    fn ordered_phases_comply() {
        use GridCell::*;
        let o = vec![obs(0.0, C4, C5), obs(2.0, C2, C2), obs(5.0, C4, C4), obs(9.5, C6, C4)];
        assert_eq!(check_compliance(&o, &spec()), (true, Some((2.0, 9.5))));
    }

    #[test]
    fn missing_first_phase_fails() {
        use GridCell::*;
        let o = vec![obs(0.0, C4, C5), obs(9.5, C6, C4)];
        assert_eq!(check_compliance(&o, &spec()), (false, None));
    }

    #[test]
    fn simultaneous_phases_do_not_comply() {
        let same = ScenarioSpec::canonical(GridConfig::from_numbers(2, 2).unwrap(), GridConfig::from_numbers(2, 2).unwrap());
        let o = vec![obs(1.0, GridCell::C2, GridCell::C2)];
        assert!(!check_compliance(&o, &same).0);
    }

    #[test]
    fn classify_is_a_bijection() {
        let all: std::collections::BTreeSet<Outcome> =
            [(true, true), (true, false), (false, true), (false, false)].iter().map(|&(c, p)| classify(c, p)).collect();
        assert_eq!(all.len(), 4);
        for o in Outcome::ALL {
            assert_eq!(classify(o.compliance(), o.property_ok()), o);
        }
    }
}
