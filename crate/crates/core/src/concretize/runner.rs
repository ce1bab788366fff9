//! ScenarioRunner-style Python export. The output is a behavior-tree
//! builder for an external runner and is never executed here.

use std::fmt::Write as _;

use super::{BehaviorNode, BehaviorProgram, ConcreteScenario};
use crate::rational::fmt_decimal;

fn atom(out: &mut String, seq: &str, actor: &str, k: usize, n: &BehaviorNode) {
    let d = fmt_decimal;
    let w = out;
    match n {
        BehaviorNode::DriveDistance { target_speed, distance } => {
            writeln!(w, "        # drive straight forward for {} m at {} m/s", d(distance), d(target_speed)).unwrap();
            writeln!(w, "        drive_{k} = py_trees.composites.Parallel(").unwrap();
            writeln!(w, "            \"{actor}_drive_{k}\", policy=py_trees.common.ParallelPolicy.SUCCESS_ON_ONE)").unwrap();
            writeln!(w, "        drive_{k}.add_child(WaypointFollower({actor}, {}, avoid_collision=False))", d(target_speed)).unwrap();
            writeln!(w, "        drive_{k}.add_child(DriveDistance({actor}, {}))", d(distance)).unwrap();
            writeln!(w, "        {seq}.add_child(drive_{k})").unwrap();
        }
        BehaviorNode::LaneChange { direction, speed, maneuver_distance, total_distance } => {
            let dir = direction.as_str();
            writeln!(
                w,
                "        # change lane to the {dir} at {} m/s: {} m while moving across, {} m in total",
                d(speed),
                d(maneuver_distance),
                d(total_distance)
            )
            .unwrap();
            writeln!(w, "        lane_change_{k} = py_trees.composites.Parallel(").unwrap();
            writeln!(w, "            \"{actor}_lane_change_{k}\", policy=py_trees.common.ParallelPolicy.SUCCESS_ON_ONE)").unwrap();
            writeln!(
                w,
                "        lane_change_{k}.add_child(LaneChange({actor}, speed={}, direction=\"{dir}\", distance_same_lane=0, distance_other_lane={}, distance_lane_change={}))",
                d(speed),
                d(&(*total_distance - *maneuver_distance)),
                d(maneuver_distance)
            )
            .unwrap();
            writeln!(w, "        lane_change_{k}.add_child(DriveDistance({actor}, {}))", d(total_distance)).unwrap();
            writeln!(w, "        {seq}.add_child(lane_change_{k})").unwrap();
        }
        BehaviorNode::StandStill { duration } => {
            writeln!(w, "        # stand still for {} s", d(duration)).unwrap();
            writeln!(w, "        stand_{k} = py_trees.composites.Parallel(").unwrap();
            writeln!(w, "            \"{actor}_stand_{k}\", policy=py_trees.common.ParallelPolicy.SUCCESS_ON_ONE)").unwrap();
            writeln!(w, "        stand_{k}.add_child(StopVehicle({actor}, 1.0))").unwrap();
            writeln!(w, "        stand_{k}.add_child(TimeOut({}))", d(duration)).unwrap();
            writeln!(w, "        {seq}.add_child(stand_{k})").unwrap();
        }
    }
}

fn program(out: &mut String, index: usize, p: &BehaviorProgram) {
    let actor = format!("self.other_actors[{index}]");
    let seq = format!("{}_sequence", p.vehicle_id);
    writeln!(out, "        # {} starts in lane {} at {} m", p.vehicle_id, p.initial_lane, fmt_decimal(&p.initial_pos)).unwrap();
    writeln!(out, "        {seq} = py_trees.composites.Sequence(\"{} behavior\")", p.vehicle_id).unwrap();
    for (k, n) in p.nodes.iter().enumerate() {
        atom(out, &seq, &actor, k, n);
    }
    writeln!(out, "        root.add_child({seq})").unwrap();
    writeln!(out).unwrap();
}

fn class_name(id: &str) -> String {
    let mut name = String::from("Scenario");
    let mut upper = true;
    for c in id.chars() {
        if c.is_ascii_alphanumeric() {
            if upper {
                name.push(c.to_ascii_uppercase());
            } else {
                name.push(c);
            }
            upper = false;
        } else {
            upper = true;
        }
    }
    name
}

/// Emits one behavior-tree builder with a sequence per non-ego.
pub fn export_scenariorunner_script(s: &ConcreteScenario) -> String {
    let mut out = String::new();
    let w = &mut out;
    writeln!(w, "# Generated scenario {} (offset {} m).", s.scenario_id, fmt_decimal(&s.offset)).unwrap();
    writeln!(w, "# Ego: lane {}, start {} m, route length {} m.", s.ego.lane, fmt_decimal(&s.ego.pos), fmt_decimal(&s.ego.route_length))
        .unwrap();
    writeln!(w, "import py_trees").unwrap();
    writeln!(w).unwrap();
    writeln!(w, "from srunner.scenariomanager.scenarioatomics.atomic_behaviors import (").unwrap();
    writeln!(w, "    DriveDistance, LaneChange, StopVehicle, WaypointFollower)").unwrap();
    writeln!(w, "from srunner.scenariomanager.timer import TimeOut").unwrap();
    writeln!(w, "from srunner.scenarios.basic_scenario import BasicScenario").unwrap();
    writeln!(w).unwrap();
    writeln!(w).unwrap();
    writeln!(w, "class {}(BasicScenario):", class_name(&s.scenario_id)).unwrap();
    writeln!(w).unwrap();
    writeln!(w, "    def _create_behavior(self):").unwrap();
    writeln!(w, "        root = py_trees.composites.Parallel(").unwrap();
    writeln!(w, "            \"{}\", policy=py_trees.common.ParallelPolicy.SUCCESS_ON_ALL)", s.scenario_id).unwrap();
    writeln!(w).unwrap();
    for (i, p) in s.programs.iter().enumerate() {
        program(w, i, p);
    }
    writeln!(w, "        return root").unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concretize::{Direction, EgoStart};
    use crate::model::VehicleId;
    use crate::rational::{q, qr};

    fn fig_like() -> ConcreteScenario {
        ConcreteScenario {
            scenario_id: "c2c2_c6c4_level".into(),
            spec_id: "c2c2_c6c4".into(),
            offset: q(0),
            ego: EgoStart { lane: 1, pos: q(0), route_length: q(80) },
            programs: vec![
                BehaviorProgram {
                    vehicle_id: VehicleId::Car1,
                    initial_lane: 1,
                    initial_pos: q(10),
                    nodes: vec![
                        BehaviorNode::DriveDistance { target_speed: q(3), distance: qr(13, 5) },
                        BehaviorNode::LaneChange {
                            direction: Direction::Left,
                            speed: q(2),
                            maneuver_distance: q(9),
                            total_distance: q(12),
                        },
                        BehaviorNode::StandStill { duration: q(1) },
                    ],
                },
                BehaviorProgram { vehicle_id: VehicleId::Car2, initial_lane: 2, initial_pos: q(-10), nodes: vec![] },
            ],
        }
    }

    #[test]
    fn atoms_carry_node_parameters() {
        let text = export_scenariorunner_script(&fig_like());
        assert!(text.contains("WaypointFollower(self.other_actors[0], 3.00"), "{text}");
        assert!(text.contains("DriveDistance(self.other_actors[0], 2.60)"));
        assert!(text.contains("direction=\"left\""));
        assert!(text.contains("distance_lane_change=9.00"));
        assert!(text.contains("DriveDistance(self.other_actors[0], 12.00)"));
        assert!(text.contains("TimeOut(1.00)"));
        assert!(text.contains("class ScenarioC2c2C6c4Level(BasicScenario)"));
        assert_eq!(text, export_scenariorunner_script(&fig_like()));
    }

    #[test]
    fn one_sequence_per_non_ego() {
        let text = export_scenariorunner_script(&fig_like());
        assert!(text.contains("car1_sequence = py_trees.composites.Sequence"));
        assert!(text.contains("car2_sequence = py_trees.composites.Sequence"));
        assert_eq!(text.matches("root.add_child(").count(), 2);
    }
}
