//! Canonical scenario JSON. Field order is fixed and numbers use fixed-point
//! decimals with at least two fractional digits, so equal scenarios always
//! serialize to equal bytes.

use std::fmt::Write as _;

use serde_json::{Map, Value};
use thiserror::Error;

use super::{BehaviorNode, BehaviorProgram, ConcreteScenario, ConcretizeError, Direction, EgoStart};
use crate::model::VehicleId;
use crate::rational::{fmt_decimal, parse_q, Q};

#[derive(Debug, Error)]
pub enum ScenarioFileError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("scenario field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error(transparent)]
    Invalid(#[from] ConcretizeError),
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn write_node(out: &mut String, n: &BehaviorNode) {
    let d = fmt_decimal;
    match n {
        BehaviorNode::DriveDistance { target_speed, distance } => write!(
            out,
            r#"{{"kind": "drive_distance", "target_speed": {}, "distance": {}}}"#,
            d(target_speed),
            d(distance)
        ),
        BehaviorNode::LaneChange { direction, speed, maneuver_distance, total_distance } => write!(
            out,
            r#"{{"kind": "lane_change", "direction": "{}", "speed": {}, "maneuver_distance": {}, "total_distance": {}}}"#,
            direction.as_str(),
            d(speed),
            d(maneuver_distance),
            d(total_distance)
        ),
        BehaviorNode::StandStill { duration } => {
            write!(out, r#"{{"kind": "stand_still", "duration": {}}}"#, d(duration))
        }
    }
    .expect("write to string");
}

/// Serializes a scenario. Distances are in meters, speeds in m/s.
pub fn emit_scenario_file(s: &ConcreteScenario) -> String {
    let mut out = String::new();
    let w = &mut out;
    writeln!(w, "{{").unwrap();
    writeln!(w, "  \"scenario_id\": {},", json_str(&s.scenario_id)).unwrap();
    writeln!(w, "  \"spec_id\": {},", json_str(&s.spec_id)).unwrap();
    writeln!(w, "  \"offset\": {},", fmt_decimal(&s.offset)).unwrap();
    writeln!(
        w,
        "  \"ego\": {{\"lane\": {}, \"pos\": {}, \"route_length\": {}}},",
        s.ego.lane,
        fmt_decimal(&s.ego.pos),
        fmt_decimal(&s.ego.route_length)
    )
    .unwrap();
    writeln!(w, "  \"non_egos\": [").unwrap();
    for (i, p) in s.programs.iter().enumerate() {
        writeln!(w, "    {{").unwrap();
        writeln!(w, "      \"id\": \"{}\",", p.vehicle_id).unwrap();
        writeln!(w, "      \"lane\": {},", p.initial_lane).unwrap();
        writeln!(w, "      \"pos\": {},", fmt_decimal(&p.initial_pos)).unwrap();
        if p.nodes.is_empty() {
            writeln!(w, "      \"nodes\": []").unwrap();
        } else {
            writeln!(w, "      \"nodes\": [").unwrap();
            for (j, n) in p.nodes.iter().enumerate() {
                w.push_str("        ");
                write_node(w, n);
                w.push_str(if j + 1 < p.nodes.len() { ",\n" } else { "\n" });
            }
            writeln!(w, "      ]").unwrap();
        }
        writeln!(w, "    }}{}", if i + 1 < s.programs.len() { "," } else { "" }).unwrap();
    }
    writeln!(w, "  ]").unwrap();
    writeln!(w, "}}").unwrap();
    out
}

fn field<'a>(obj: &'a Map<String, Value>, path: &str, key: &str) -> Result<&'a Value, ScenarioFileError> {
    obj.get(key).ok_or_else(|| ScenarioFileError::Field { field: format!("{path}{key}"), message: "missing".into() })
}

fn bad(path: &str, key: &str, message: &str) -> ScenarioFileError {
    ScenarioFileError::Field { field: format!("{path}{key}"), message: message.into() }
}

fn num(obj: &Map<String, Value>, path: &str, key: &str) -> Result<Q, ScenarioFileError> {
    match field(obj, path, key)? {
        Value::Number(n) => parse_q(&n.to_string()).map_err(|e| bad(path, key, &e.to_string())),
        _ => Err(bad(path, key, "expected a number")),
    }
}

fn text<'a>(obj: &'a Map<String, Value>, path: &str, key: &str) -> Result<&'a str, ScenarioFileError> {
    field(obj, path, key)?.as_str().ok_or_else(|| bad(path, key, "expected a string"))
}

fn lane(obj: &Map<String, Value>, path: &str, key: &str) -> Result<u8, ScenarioFileError> {
    field(obj, path, key)?
        .as_u64()
        .and_then(|v| u8::try_from(v).ok())
        .ok_or_else(|| bad(path, key, "expected a lane index"))
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, ScenarioFileError> {
    v.as_object().ok_or_else(|| bad(path, "", "expected an object"))
}

fn parse_node(v: &Value, path: &str) -> Result<BehaviorNode, ScenarioFileError> {
    let o = object(v, path)?;
    Ok(match text(o, path, "kind")? {
        "drive_distance" => {
            BehaviorNode::DriveDistance { target_speed: num(o, path, "target_speed")?, distance: num(o, path, "distance")? }
        }
        "lane_change" => BehaviorNode::LaneChange {
            direction: match text(o, path, "direction")? {
                "left" => Direction::Left,
                "right" => Direction::Right,
                _ => return Err(bad(path, "direction", "expected `left` or `right`")),
            },
            speed: num(o, path, "speed")?,
            maneuver_distance: num(o, path, "maneuver_distance")?,
            total_distance: num(o, path, "total_distance")?,
        },
        "stand_still" => BehaviorNode::StandStill { duration: num(o, path, "duration")? },
        other => return Err(bad(path, "kind", &format!("unknown node kind `{other}`"))),
    })
}

/// Parses and validates a scenario written by [`emit_scenario_file`].
pub fn parse_scenario_file(textual: &str) -> Result<ConcreteScenario, ScenarioFileError> {
    let root: Value = serde_json::from_str(textual)?;
    let o = object(&root, "")?;
    let ego = object(field(o, "", "ego")?, "ego.")?;
    let ego = EgoStart { lane: lane(ego, "ego.", "lane")?, pos: num(ego, "ego.", "pos")?, route_length: num(ego, "ego.", "route_length")? };
    let list = field(o, "", "non_egos")?.as_array().ok_or_else(|| bad("", "non_egos", "expected an array"))?;
    let mut programs = Vec::with_capacity(list.len());
    for (i, v) in list.iter().enumerate() {
        let path = format!("non_egos[{i}].");
        let p = object(v, &path)?;
        let id = text(p, &path, "id")?;
        let vehicle_id = VehicleId::parse(id)
            .filter(|v| *v != VehicleId::Ego)
            .ok_or_else(|| bad(&path, "id", "expected car1 or car2"))?;
        let nodes = field(p, &path, "nodes")?.as_array().ok_or_else(|| bad(&path, "nodes", "expected an array"))?;
        let nodes = nodes
            .iter()
            .enumerate()
            .map(|(j, n)| parse_node(n, &format!("{path}nodes[{j}].")))
            .collect::<Result<Vec<_>, _>>()?;
        programs.push(BehaviorProgram { vehicle_id, initial_lane: lane(p, &path, "lane")?, initial_pos: num(p, &path, "pos")?, nodes });
    }
    let s = ConcreteScenario {
        scenario_id: text(o, "", "scenario_id")?.to_string(),
        spec_id: text(o, "", "spec_id")?.to_string(),
        offset: num(o, "", "offset")?,
        ego,
        programs,
    };
    s.validate()?;
    Ok(s)
}
