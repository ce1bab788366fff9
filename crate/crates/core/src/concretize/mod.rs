//! Refinement of abstract witnesses into per-vehicle behavior programs.
//!
//! Every abstract transition of a non-ego becomes a drive, lane-change or
//! stand-still behavior. One concrete scenario is produced per initial
//! offset in [`offsets`].

mod runner;
mod scenario_json;

use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use runner::export_scenariorunner_script;
pub use scenario_json::{emit_scenario_file, parse_scenario_file, ScenarioFileError};

use crate::model::{ModelParams, VehicleId, VehicleState};
use crate::rational::{fmt_decimal, q, qr, Q};
use crate::search::AbstractTrace;

/// Longitudinal distance covered while moving laterally during a lane change.
pub const LANE_CHANGE_MANEUVER_DISTANCE: i64 = 9;
/// Distance after which a lane-change behavior hands over to the next one.
pub const LANE_CHANGE_TOTAL_DISTANCE: i64 = 12;
/// Extra route length given to the ego past its abstract displacement.
pub const EGO_ROUTE_MARGIN: i64 = 50;

/// Initial longitudinal offsets of the non-egos relative to their abstract
/// start: behind, level and ahead.
pub fn offsets() -> [Q; 3] {
    [qr(-7, 2), q(0), qr(7, 2)]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }

    /// Signed lane delta; lane 0 is the leftmost lane.
    pub fn lane_delta(self) -> i8 {
        match self {
            Direction::Left => -1,
            Direction::Right => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BehaviorNode {
    DriveDistance { target_speed: Q, distance: Q },
    LaneChange { direction: Direction, speed: Q, maneuver_distance: Q, total_distance: Q },
    StandStill { duration: Q },
}

impl BehaviorNode {
    /// Longitudinal distance the node prescribes.
    pub fn distance(&self) -> Q {
        match self {
            BehaviorNode::DriveDistance { distance, .. } => *distance,
            BehaviorNode::LaneChange { total_distance, .. } => *total_distance,
            BehaviorNode::StandStill { .. } => Q::zero(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            BehaviorNode::DriveDistance { .. } => "drive_distance",
            BehaviorNode::LaneChange { .. } => "lane_change",
            BehaviorNode::StandStill { .. } => "stand_still",
        }
    }

    fn check(&self) -> Result<(), String> {
        match self {
            BehaviorNode::DriveDistance { target_speed, distance } => {
                if *distance < Q::zero() || *target_speed < Q::zero() {
                    return Err("drive distance and speed must be non-negative".into());
                }
            }
            BehaviorNode::LaneChange { speed, maneuver_distance, total_distance, .. } => {
                if *speed < Q::zero() || *maneuver_distance < Q::zero() || maneuver_distance > total_distance {
                    return Err("lane change needs 0 <= maneuver_distance <= total_distance".into());
                }
            }
            BehaviorNode::StandStill { duration } => {
                if *duration <= Q::zero() {
                    return Err("stand-still duration must be positive".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BehaviorProgram {
    pub vehicle_id: VehicleId,
    pub initial_lane: u8,
    /// Absolute initial longitudinal position (abstract start + offset).
    pub initial_pos: Q,
    pub nodes: Vec<BehaviorNode>,
}

impl BehaviorProgram {
    pub fn total_distance(&self) -> Q {
        self.nodes.iter().map(BehaviorNode::distance).sum()
    }

    pub fn net_lane_delta(&self) -> i32 {
        self.nodes
            .iter()
            .map(|n| match n {
                BehaviorNode::LaneChange { direction, .. } => direction.lane_delta() as i32,
                _ => 0,
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EgoStart {
    pub lane: u8,
    pub pos: Q,
    pub route_length: Q,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcreteScenario {
    pub scenario_id: String,
    pub spec_id: String,
    pub offset: Q,
    pub ego: EgoStart,
    /// car1 then car2.
    pub programs: Vec<BehaviorProgram>,
}

impl ConcreteScenario {
    pub fn validate(&self) -> Result<(), ConcretizeError> {
        let invalid = |m: String| Err(ConcretizeError::InvalidScenario(m));
        let ids: Vec<VehicleId> = self.programs.iter().map(|p| p.vehicle_id).collect();
        if ids != [VehicleId::Car1, VehicleId::Car2] {
            return invalid(format!("expected programs for car1 and car2, got {ids:?}"));
        }
        if self.ego.route_length <= Q::zero() {
            return invalid("ego route length must be positive".into());
        }
        for p in &self.programs {
            for n in &p.nodes {
                n.check().or_else(|m| invalid(format!("{}: {m}", p.vehicle_id)))?;
            }
            for w in p.nodes.windows(2) {
                if matches!((&w[0], &w[1]), (BehaviorNode::StandStill { .. }, BehaviorNode::StandStill { .. })) {
                    return invalid(format!("{}: consecutive stand-still nodes", p.vehicle_id));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConcretizeError {
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConcretizeOptions {
    /// Merge consecutive drive nodes with equal target speed.
    pub merge_drives: bool,
    /// Offset each lane change's fixed 12 m against neighbouring drive
    /// nodes so the program covers exactly the abstract displacement. When
    /// off, transitions map one-to-one onto nodes.
    pub conserve_distance: bool,
}

impl Default for ConcretizeOptions {
    fn default() -> Self {
        Self { merge_drives: false, conserve_distance: true }
    }
}

/// Short tag used in scenario ids: `behind`, `level`, `ahead`, or the
/// decimal value for non-standard offsets.
pub fn offset_tag(offset: &Q) -> String {
    let [behind, level, ahead] = offsets();
    if *offset == behind {
        "behind".into()
    } else if *offset == level {
        "level".into()
    } else if *offset == ahead {
        "ahead".into()
    } else {
        format!("x{}", fmt_decimal(offset))
    }
}

fn check_trace(trace: &AbstractTrace, params: &ModelParams) -> Result<(), ConcretizeError> {
    let bad = |m: String| Err(ConcretizeError::InvalidTrace(m));
    if trace.states.is_empty() || trace.states.len() != trace.inputs.len() + 1 {
        return bad(format!("{} states for {} inputs", trace.states.len(), trace.inputs.len()));
    }
    for (k, w) in trace.states.windows(2).enumerate() {
        for id in VehicleId::NON_EGO {
            let (a, b) = (w[0].vehicle(id), w[1].vehicle(id));
            if (a.lane as i16 - b.lane as i16).abs() > 1 || b.lane > params.max_lane {
                return bad(format!("step {k}: {id} jumps from lane {} to {}", a.lane, b.lane));
            }
            if b.speed < Q::zero() || b.pos < a.pos {
                return bad(format!("step {k}: {id} moves backwards"));
            }
        }
        if w[1].ego.lane != w[0].ego.lane {
            return bad(format!("step {k}: ego changes lane"));
        }
    }
    Ok(())
}

/// Raw node for one transition plus the abstract displacement it stands for.
struct RawNode {
    node: BehaviorNode,
    abstract_distance: Q,
}

fn raw_nodes(states: &[&VehicleState], params: &ModelParams, opts: &ConcretizeOptions) -> Vec<RawNode> {
    let mut out: Vec<RawNode> = Vec::new();
    for w in states.windows(2) {
        let (a, b) = (w[0], w[1]);
        let moved = b.pos - a.pos;
        if b.lane != a.lane {
            let direction = if b.lane < a.lane { Direction::Left } else { Direction::Right };
            out.push(RawNode {
                node: BehaviorNode::LaneChange {
                    direction,
                    speed: b.speed,
                    maneuver_distance: q(LANE_CHANGE_MANEUVER_DISTANCE),
                    total_distance: q(LANE_CHANGE_TOTAL_DISTANCE),
                },
                abstract_distance: moved,
            });
        } else if a.speed.is_zero() && b.speed.is_zero() {
            if let Some(RawNode { node: BehaviorNode::StandStill { duration }, .. }) = out.last_mut() {
                *duration += params.time_step;
            } else {
                out.push(RawNode { node: BehaviorNode::StandStill { duration: params.time_step }, abstract_distance: Q::zero() });
            }
        } else if !moved.is_zero() {
            if opts.merge_drives {
                if let Some(RawNode { node: BehaviorNode::DriveDistance { target_speed, distance }, abstract_distance }) =
                    out.last_mut()
                {
                    if *target_speed == b.speed {
                        *distance += moved;
                        *abstract_distance += moved;
                        continue;
                    }
                }
            }
            out.push(RawNode {
                node: BehaviorNode::DriveDistance { target_speed: b.speed, distance: moved },
                abstract_distance: moved,
            });
        }
    }
    out
}

/// Moves `amount` of distance out of drive nodes, visiting them in `order`.
/// Returns what could not be taken.
fn take_from_drives(nodes: &mut [RawNode], order: impl Iterator<Item = usize>, mut amount: Q) -> Q {
    for i in order {
        if amount <= Q::zero() {
            break;
        }
        if let BehaviorNode::DriveDistance { distance, .. } = &mut nodes[i].node {
            let t = (*distance).min(amount);
            *distance -= t;
            amount -= t;
        }
    }
    amount
}

/// Balances every lane change's prescribed distance against the drive
/// nodes after it (then before it) so that the program's total distance
/// equals the abstract displacement. A lane change that cannot be covered
/// is shortened.
fn conserve(mut nodes: Vec<RawNode>) -> Vec<BehaviorNode> {
    let n = nodes.len();
    for i in 0..n {
        let BehaviorNode::LaneChange { total_distance, speed, .. } = &nodes[i].node else {
            continue;
        };
        let (total, speed) = (*total_distance, *speed);
        let excess = total - nodes[i].abstract_distance;
        if excess > Q::zero() {
            let left = take_from_drives(&mut nodes, i + 1..n, excess);
            let left = take_from_drives(&mut nodes, (0..i).rev(), left);
            if left > Q::zero() {
                if let BehaviorNode::LaneChange { total_distance, maneuver_distance, .. } = &mut nodes[i].node {
                    *total_distance -= left;
                    *maneuver_distance = (*maneuver_distance).min(*total_distance);
                }
            }
        } else if excess < Q::zero() {
            let surplus = -excess;
            let next_drive = (i + 1..n).find(|&j| matches!(nodes[j].node, BehaviorNode::DriveDistance { .. }));
            match next_drive.map(|j| &mut nodes[j].node) {
                Some(BehaviorNode::DriveDistance { distance, .. }) => *distance += surplus,
                _ => {
                    nodes.push(RawNode {
                        node: BehaviorNode::DriveDistance { target_speed: speed, distance: surplus },
                        abstract_distance: surplus,
                    });
                }
            }
        }
    }
    nodes
        .into_iter()
        .map(|r| r.node)
        .filter(|n| !matches!(n, BehaviorNode::DriveDistance { distance, .. } if distance.is_zero()))
        .collect()
}

fn merge_adjacent(nodes: Vec<BehaviorNode>, merge_drives: bool) -> Vec<BehaviorNode> {
    let mut out: Vec<BehaviorNode> = Vec::with_capacity(nodes.len());
    for n in nodes {
        match (out.last_mut(), &n) {
            (Some(BehaviorNode::StandStill { duration }), BehaviorNode::StandStill { duration: d }) => *duration += d,
            (
                Some(BehaviorNode::DriveDistance { target_speed, distance }),
                BehaviorNode::DriveDistance { target_speed: s, distance: d },
            ) if merge_drives && target_speed == s => *distance += d,
            _ => out.push(n),
        }
    }
    out
}

/// Builds the behavior program of one non-ego.
pub fn concretize_vehicle(
    trace: &AbstractTrace,
    id: VehicleId,
    offset: Q,
    params: &ModelParams,
    opts: &ConcretizeOptions,
) -> BehaviorProgram {
    let states: Vec<&VehicleState> = trace.states.iter().map(|w| w.vehicle(id)).collect();
    let raw = raw_nodes(&states, params, opts);
    let nodes = if opts.conserve_distance {
        conserve(raw)
    } else {
        raw.into_iter().map(|r| r.node).collect()
    };
    BehaviorProgram {
        vehicle_id: id,
        initial_lane: states[0].lane,
        initial_pos: states[0].pos + offset,
        nodes: merge_adjacent(nodes, opts.merge_drives),
    }
}

/// Concretizes a validated witness for one initial offset.
pub fn concretize(
    trace: &AbstractTrace,
    offset: Q,
    params: &ModelParams,
    opts: &ConcretizeOptions,
) -> Result<ConcreteScenario, ConcretizeError> {
    check_trace(trace, params)?;
    let first = &trace.states[0];
    let last = trace.states.last().expect("non-empty");
    let programs = VehicleId::NON_EGO
        .iter()
        .map(|&id| concretize_vehicle(trace, id, offset, params, opts))
        .collect();
    let scenario = ConcreteScenario {
        scenario_id: format!("{}_{}", trace.spec_id, offset_tag(&offset)),
        spec_id: trace.spec_id.clone(),
        offset,
        ego: EgoStart {
            lane: first.ego.lane,
            pos: first.ego.pos,
            route_length: last.ego.pos - first.ego.pos + q(EGO_ROUTE_MARGIN),
        },
        programs,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// One scenario per entry of [`offsets`].
pub fn concretize_all(
    trace: &AbstractTrace,
    params: &ModelParams,
    opts: &ConcretizeOptions,
) -> Result<Vec<ConcreteScenario>, ConcretizeError> {
    offsets().into_iter().map(|o| concretize(trace, o, params, opts)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WorldState;

    fn car(pos: Q, lane: u8, speed: Q) -> VehicleState {
        VehicleState { pos, lane, speed, steps_since_lane_change: 6 }
    }

    /// A trace where car2 follows `car2` and everything else is at rest.
    fn trace_for(car2: Vec<VehicleState>) -> AbstractTrace {
        let p = ModelParams::default();
        let states: Vec<WorldState> = car2
            .into_iter()
            .enumerate()
            .map(|(k, c)| {
                let mut w = WorldState::initial(&p);
                w.car2 = c;
                w.step_index = k as u32;
                w
            })
            .collect();
        let n = states.len() - 1;
        let input = crate::model::ControlInput::new(q(0), 0);
        AbstractTrace {
            spec_id: "t".into(),
            states,
            inputs: vec![(input.clone(), input); n],
            phase1_index: 0,
            phase2_index: n,
        }
    }

    fn raw() -> ConcretizeOptions {
        ConcretizeOptions { merge_drives: false, conserve_distance: false }
    }

    #[test]
    fn offsets_are_symmetric() {
        let o = offsets();
        assert_eq!(o.len(), 3);
        assert!(o.contains(&q(0)));
        assert_eq!(o.iter().sum::<Q>(), q(0));
    }

    #[test]
    fn drive_transition_maps_to_drive_node() {
        let t = trace_for(vec![car(q(0), 2, q(3)), car(qr(13, 5), 2, q(3))]);
        let p = concretize_vehicle(&t, VehicleId::Car2, q(0), &ModelParams::default(), &raw());
        assert_eq!(p.nodes, vec![BehaviorNode::DriveDistance { target_speed: q(3), distance: qr(13, 5) }]);
    }

    #[test]
    fn lane_change_node_parameters() {
        let t = trace_for(vec![car(q(0), 1, q(2)), car(qr(19, 10), 0, q(2))]);
        let p = concretize_vehicle(&t, VehicleId::Car2, q(0), &ModelParams::default(), &raw());
        assert_eq!(
            p.nodes,
            vec![BehaviorNode::LaneChange {
                direction: Direction::Left,
                speed: q(2),
                maneuver_distance: q(9),
                total_distance: q(12)
            }]
        );
    }

    #[test]
    fn three_rest_steps_merge_into_one_stand_still() {
        let s = car(q(5), 2, q(0));
        let t = trace_for(vec![s.clone(), s.clone(), s.clone(), s]);
        let p = concretize_vehicle(&t, VehicleId::Car2, q(0), &ModelParams::default(), &raw());
        assert_eq!(p.nodes, vec![BehaviorNode::StandStill { duration: q(3) }]);
    }

    #[test]
    fn deceleration_to_rest_then_stand_still() {
        let t = trace_for(vec![car(q(0), 2, q(2)), car(q(1), 2, q(0)), car(q(1), 2, q(0))]);
        let p = concretize_vehicle(&t, VehicleId::Car2, q(0), &ModelParams::default(), &raw());
        assert_eq!(
            p.nodes,
            vec![
                BehaviorNode::DriveDistance { target_speed: q(0), distance: q(1) },
                BehaviorNode::StandStill { duration: q(1) }
            ]
        );
    }

    #[test]
    fn merging_is_optional() {
        let t = trace_for(vec![car(q(0), 2, q(3)), car(q(3), 2, q(3)), car(q(6), 2, q(3))]);
        let pr = ModelParams::default();
        assert_eq!(concretize_vehicle(&t, VehicleId::Car2, q(0), &pr, &raw()).nodes.len(), 2);
        let merged = ConcretizeOptions { merge_drives: true, conserve_distance: false };
        assert_eq!(
            concretize_vehicle(&t, VehicleId::Car2, q(0), &pr, &merged).nodes,
            vec![BehaviorNode::DriveDistance { target_speed: q(3), distance: q(6) }]
        );
    }

    #[test]
    fn conservation_borrows_from_following_drives() {
        // Lane change covering 1.9 m in the abstract model, then 20 m of driving.
        let t = trace_for(vec![
            car(q(0), 2, q(2)),
            car(qr(19, 10), 1, q(2)),
            car(qr(119, 10), 1, q(10)),
            car(qr(219, 10), 1, q(10)),
        ]);
        let p = concretize_vehicle(&t, VehicleId::Car2, q(0), &ModelParams::default(), &ConcretizeOptions::default());
        assert_eq!(p.total_distance(), qr(219, 10));
        assert_eq!(p.net_lane_delta(), -1);
        assert_eq!(p.nodes[0].distance(), q(12));
        assert_eq!(p.nodes.len(), 2);
    }

    #[test]
    fn conservation_shrinks_uncovered_lane_change() {
        let t = trace_for(vec![car(q(0), 2, q(2)), car(qr(19, 10), 1, q(2))]);
        let p = concretize_vehicle(&t, VehicleId::Car2, q(0), &ModelParams::default(), &ConcretizeOptions::default());
        assert_eq!(
            p.nodes,
            vec![BehaviorNode::LaneChange {
                direction: Direction::Left,
                speed: q(2),
                maneuver_distance: qr(19, 10),
                total_distance: qr(19, 10)
            }]
        );
    }

    #[test]
    fn offsets_only_shift_positions() {
        let t = trace_for(vec![car(q(0), 2, q(3)), car(q(3), 2, q(3))]);
        let all = concretize_all(&t, &ModelParams::default(), &ConcretizeOptions::default()).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(all[0].programs[1].initial_pos, qr(-7, 2));
        assert_eq!(all[0].programs[1].nodes, all[2].programs[1].nodes);
        assert_eq!(all[1].scenario_id, "t_level");
        assert_eq!(all[0].ego.route_length, q(50));
    }

    #[test]
    fn malformed_trace_rejected() {
        let mut t = trace_for(vec![car(q(0), 2, q(3)), car(q(3), 0, q(3))]);
        let err = concretize(&t, q(0), &ModelParams::default(), &ConcretizeOptions::default()).unwrap_err();
        assert!(matches!(err, ConcretizeError::InvalidTrace(_)));
        t.inputs.clear();
        assert!(concretize(&t, q(0), &ModelParams::default(), &ConcretizeOptions::default()).is_err());
    }
}
