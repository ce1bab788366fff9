//! Fixed-step kinematic simulator on straight parallel lanes.
//!
//! Longitudinal position `x` grows along the road, lateral position `y` is
//! `lane * lane_width` at a lane center (lane 0 leftmost). Non-egos execute
//! their behavior programs; the ego is driven by an [`EgoAgentSpec`].

mod agent;
mod trace_csv;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agent::{ego_observe, EgoAgentSpec, Observation, ObservedCar, Perception};
pub use trace_csv::{read_trace, read_trace_csv, write_events_json, write_trace_csv, TraceFileError};

use crate::concretize::{BehaviorNode, ConcreteScenario};
use crate::model::{ModelParams, VehicleId};
use crate::rational::to_f64;

/// Proportional speed-controller gain (1/s).
pub const SPEED_GAIN: f64 = 2.0;
/// Acceleration limit of the non-ego speed controller (m/s^2).
pub const NON_EGO_ACCEL_LIMIT: f64 = 6.0;
/// A drive node with target speed 0 also ends once the car is this slow.
pub const STOP_SPEED: f64 = 0.05;
/// Lower bound on the target speed of a lane change so the maneuver always
/// makes progress.
pub const LANE_CHANGE_MIN_SPEED: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    pub max_sim_time: f64,
    pub lane_width: f64,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
    pub max_lane: u8,
    pub ego_cruise_speed: f64,
    pub max_acceleration: f64,
    /// Negative.
    pub max_braking: f64,
    pub rng_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::from_params(&ModelParams::default())
    }
}

impl SimConfig {
    /// Default geometry with the ego limits and lane count of `params`.
    pub fn from_params(params: &ModelParams) -> Self {
        Self {
            dt: 0.05,
            max_sim_time: 120.0,
            lane_width: 3.5,
            vehicle_length: 4.5,
            vehicle_width: 2.0,
            max_lane: params.max_lane,
            ego_cruise_speed: to_f64(&params.ego_cruise_speed),
            max_acceleration: to_f64(&params.max_acceleration),
            max_braking: to_f64(&params.max_braking),
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.into()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be > 0");
        }
        if !(self.max_sim_time > 0.0 && self.max_sim_time.is_finite()) {
            return bad("max_sim_time must be > 0");
        }
        if !(self.lane_width > 0.0 && self.vehicle_length > 0.0 && self.vehicle_width > 0.0) {
            return bad("dimensions must be > 0");
        }
        if !(self.max_braking < 0.0 && self.max_acceleration > 0.0) {
            return bad("need max_braking < 0 < max_acceleration");
        }
        if self.ego_cruise_speed < 0.0 {
            return bad("ego_cruise_speed must be >= 0");
        }
        Ok(())
    }

    /// Lane whose center is nearest to lateral position `y`.
    pub fn lane_of(&self, y: f64) -> u8 {
        (y / self.lane_width).round().clamp(0.0, self.max_lane as f64) as u8
    }

    pub fn lane_center(&self, lane: u8) -> f64 {
        lane as f64 * self.lane_width
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("scenario cannot be run: {0}")]
    ScenarioUnrunnable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleSample {
    pub x: f64,
    pub y: f64,
    pub lane: u8,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    /// Ego, car1, car2.
    pub vehicles: [VehicleSample; 3],
    pub throttle: f64,
    pub brake: f64,
}

impl Sample {
    pub fn vehicle(&self, id: VehicleId) -> &VehicleSample {
        &self.vehicles[vehicle_index(id)]
    }
}

pub(crate) fn vehicle_index(id: VehicleId) -> usize {
    match id {
        VehicleId::Ego => 0,
        VehicleId::Car1 => 1,
        VehicleId::Car2 => 2,
    }
}

pub(crate) const VEHICLES: [VehicleId; 3] = [VehicleId::Ego, VehicleId::Car1, VehicleId::Car2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionKind {
    FrontalCollision,
    OtherCollision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub t: f64,
    pub kind: CollisionKind,
    pub pair: [VehicleId; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcreteTrace {
    pub scenario_id: String,
    pub dt: f64,
    pub samples: Vec<Sample>,
    pub events: Vec<CollisionEvent>,
}

impl ConcreteTrace {
    pub fn has_frontal_collision(&self) -> bool {
        self.events.iter().any(|e| e.kind == CollisionKind::FrontalCollision)
    }
}

/// Rectangle overlap test between every pair of vehicles. Pairs involving
/// the ego come first. A collision is frontal when the non-ego is at or
/// ahead of the ego and in the ego's lane (nearest lane center) at contact.
pub fn detect_collisions(t: f64, vehicles: &[VehicleSample; 3], cfg: &SimConfig) -> Vec<CollisionEvent> {
    const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];
    PAIRS
        .iter()
        .filter(|&&(a, b)| overlaps(&vehicles[a], &vehicles[b], cfg))
        .map(|&(a, b)| {
            let (ego, other) = (&vehicles[a], &vehicles[b]);
            let frontal = a == 0 && other.x >= ego.x && other.lane == ego.lane;
            CollisionEvent {
                t,
                kind: if frontal { CollisionKind::FrontalCollision } else { CollisionKind::OtherCollision },
                pair: [VEHICLES[a], VEHICLES[b]],
            }
        })
        .collect()
}

fn overlaps(a: &VehicleSample, b: &VehicleSample, cfg: &SimConfig) -> bool {
    (a.x - b.x).abs() < cfg.vehicle_length && (a.y - b.y).abs() < cfg.vehicle_width
}

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// Plain-float copy of a behavior node.
#[derive(Debug, Clone, Copy)]
enum Node {
    Drive { speed: f64, distance: f64 },
    LaneChange { delta: i8, speed: f64, maneuver: f64, total: f64 },
    Stand { duration: f64 },
}

impl Node {
    fn from_behavior(n: &BehaviorNode) -> Self {
        match n {
            BehaviorNode::DriveDistance { target_speed, distance } => {
                Node::Drive { speed: to_f64(target_speed), distance: to_f64(distance) }
            }
            BehaviorNode::LaneChange { direction, speed, maneuver_distance, total_distance } => Node::LaneChange {
                delta: direction.lane_delta(),
                speed: to_f64(speed),
                maneuver: to_f64(maneuver_distance),
                total: to_f64(total_distance),
            },
            BehaviorNode::StandStill { duration } => Node::Stand { duration: to_f64(duration) },
        }
    }
}

/// Executes one non-ego program.
struct Executor {
    nodes: Vec<Node>,
    index: usize,
    progress: f64,
    elapsed: f64,
    y_from: f64,
    y_to: f64,
}

impl Executor {
    fn new(nodes: Vec<Node>) -> Self {
        Self { nodes, index: 0, progress: 0.0, elapsed: 0.0, y_from: 0.0, y_to: 0.0 }
    }

    fn done(&self) -> bool {
        self.index >= self.nodes.len()
    }

    fn current(&self) -> Option<Node> {
        self.nodes.get(self.index).copied()
    }

    fn enter(&mut self, state: &VehicleSample, cfg: &SimConfig) {
        if let Some(Node::LaneChange { delta, .. }) = self.current() {
            self.y_from = state.y;
            self.y_to = cfg.lane_center((state.lane as i16 + delta as i16) as u8);
        }
    }

    /// Skips nodes that are already complete on entry.
    fn settle(&mut self, state: &VehicleSample, cfg: &SimConfig) {
        while let Some(node) = self.current() {
            let finished = match node {
                Node::Drive { speed, distance } => {
                    self.progress >= distance || (speed <= 0.0 && state.speed < STOP_SPEED)
                }
                Node::LaneChange { total, .. } => self.progress >= total && state.y == self.y_to,
                Node::Stand { duration } => self.elapsed >= duration - 1e-9,
            };
            if !finished {
                return;
            }
            let carry = match node {
                Node::Drive { distance, .. } => (self.progress - distance).max(0.0),
                Node::LaneChange { total, .. } => (self.progress - total).max(0.0),
                Node::Stand { .. } => 0.0,
            };
            self.index += 1;
            self.progress = carry;
            self.elapsed = 0.0;
            self.enter(state, cfg);
        }
    }

    fn target_speed(&self, state: &VehicleSample) -> f64 {
        match self.current() {
            Some(Node::Drive { speed, .. }) => speed,
            Some(Node::LaneChange { speed, .. }) => speed.max(LANE_CHANGE_MIN_SPEED),
            Some(Node::Stand { .. }) => 0.0,
            None => state.speed,
        }
    }

    fn step(&mut self, state: &mut VehicleSample, cfg: &SimConfig) {
        let target = self.target_speed(state);
        let a = (SPEED_GAIN * (target - state.speed)).clamp(-NON_EGO_ACCEL_LIMIT, NON_EGO_ACCEL_LIMIT);
        let next_speed = (state.speed + a * cfg.dt).max(0.0);
        let dx = (state.speed + next_speed) / 2.0 * cfg.dt;
        state.x += dx;
        state.speed = next_speed;
        self.progress += dx;
        self.elapsed += cfg.dt;
        if let Some(Node::LaneChange { maneuver, .. }) = self.current() {
            let u = if maneuver > 0.0 { self.progress / maneuver } else { 1.0 };
            state.y = if u >= 1.0 { self.y_to } else { self.y_from + (self.y_to - self.y_from) * smoothstep(u) };
            state.lane = cfg.lane_of(state.y);
        }
        self.settle(state, cfg);
    }
}

fn check_runnable(s: &ConcreteScenario, cfg: &SimConfig) -> Result<(), SimError> {
    s.validate().map_err(|e| SimError::ScenarioUnrunnable(e.to_string()))?;
    let unrunnable = |m: String| Err(SimError::ScenarioUnrunnable(m));
    if s.ego.lane > cfg.max_lane {
        return unrunnable(format!("ego lane {} out of range", s.ego.lane));
    }
    for p in &s.programs {
        let mut lane = p.initial_lane as i16;
        if lane > cfg.max_lane as i16 {
            return unrunnable(format!("{} starts in lane {lane}, beyond the last lane", p.vehicle_id));
        }
        for n in &p.nodes {
            if let BehaviorNode::LaneChange { direction, .. } = n {
                lane += direction.lane_delta() as i16;
                if lane < 0 || lane > cfg.max_lane as i16 {
                    return unrunnable(format!("{} changes lane off the road", p.vehicle_id));
                }
            }
        }
    }
    Ok(())
}

/// Runs a scenario until every behavior program completes or
/// `max_sim_time` elapses.
pub fn run(s: &ConcreteScenario, agent: &EgoAgentSpec, cfg: &SimConfig) -> Result<ConcreteTrace, SimError> {
    cfg.validate()?;
    agent.validate().map_err(SimError::InvalidConfig)?;
    check_runnable(s, cfg)?;

    let spawn = |lane: u8, x: f64| VehicleSample { x, y: cfg.lane_center(lane), lane, speed: 0.0 };
    let mut world = [
        spawn(s.ego.lane, to_f64(&s.ego.pos)),
        spawn(s.programs[0].initial_lane, to_f64(&s.programs[0].initial_pos)),
        spawn(s.programs[1].initial_lane, to_f64(&s.programs[1].initial_pos)),
    ];
    if let Some(e) = detect_collisions(0.0, &world, cfg).first() {
        return Err(SimError::ScenarioUnrunnable(format!("{} and {} overlap at spawn", e.pair[0], e.pair[1])));
    }

    let mut executors: Vec<Executor> = s
        .programs
        .iter()
        .map(|p| Executor::new(p.nodes.iter().map(Node::from_behavior).collect()))
        .collect();
    for (k, ex) in executors.iter_mut().enumerate() {
        ex.enter(&world[k + 1], cfg);
        ex.settle(&world[k + 1], cfg);
    }

    let mut perception = Perception::new(agent.clone(), ChaCha8Rng::seed_from_u64(cfg.rng_seed));
    let mut samples = vec![Sample { t: 0.0, vehicles: world, throttle: 0.0, brake: 0.0 }];
    let mut events = Vec::new();
    let mut onsets = Onsets::default();
    let max_steps = (cfg.max_sim_time / cfg.dt).round() as u64;
    let mut k = 0u64;
    while k < max_steps && !executors.iter().all(Executor::done) {
        let t = sample_time(k, cfg.dt);
        let obs = perception.observe(t, &world, cfg);
        let a = agent::ego_acceleration(&world[0], &obs, cfg);
        let ego = &mut world[0];
        let next_speed = (ego.speed + a * cfg.dt).max(0.0);
        ego.x += (ego.speed + next_speed) / 2.0 * cfg.dt;
        ego.speed = next_speed;
        for (i, ex) in executors.iter_mut().enumerate() {
            ex.step(&mut world[i + 1], cfg);
        }
        k += 1;
        let t_next = sample_time(k, cfg.dt);
        onsets.update(t_next, &world, cfg, &mut events);
        let (throttle, brake) = agent::pedals(a, cfg);
        samples.push(Sample { t: t_next, vehicles: world, throttle, brake });
    }
    Ok(ConcreteTrace { scenario_id: s.scenario_id.clone(), dt: cfg.dt, samples, events })
}

/// `k * dt` rounded to nanoseconds, so times print without float noise.
fn sample_time(k: u64, dt: f64) -> f64 {
    (k as f64 * dt * 1e9).round() / 1e9
}

/// Collision events of an existing sample sequence, e.g. a trace recorded
/// by another simulator. Events fire on overlap onset, as in [`run`].
pub fn collision_events(samples: &[Sample], cfg: &SimConfig) -> Vec<CollisionEvent> {
    let mut onsets = Onsets::default();
    let mut events = Vec::new();
    for s in samples {
        onsets.update(s.t, &s.vehicles, cfg, &mut events);
    }
    events
}

/// Which pairs overlapped at the previous sample.
#[derive(Default)]
struct Onsets([bool; 3]);

impl Onsets {
    fn update(&mut self, t: f64, world: &[VehicleSample; 3], cfg: &SimConfig, events: &mut Vec<CollisionEvent>) {
        let mut now = [false; 3];
        for e in detect_collisions(t, world, cfg) {
            let slot = pair_slot(e.pair);
            now[slot] = true;
            if !self.0[slot] {
                events.push(e);
            }
        }
        self.0 = now;
    }
}

fn pair_slot(pair: [VehicleId; 2]) -> usize {
    match pair {
        [VehicleId::Ego, VehicleId::Car1] => 0,
        [VehicleId::Ego, VehicleId::Car2] => 1,
        _ => 2,
    }
}
