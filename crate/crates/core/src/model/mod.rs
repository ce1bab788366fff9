//! Discrete-time symbolic highway model: one ego car held in the middle lane
//! plus two non-ego cars with non-deterministic acceleration and lane changes.
//!
//! All quantities are exact rationals ([`Q`]). One transition advances every
//! vehicle by `time_step` seconds.

pub mod grid;

use std::fmt;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rational::{self, fmt_pq, q, qr, Q};

/// Vehicle identities. The model fixes exactly two non-ego cars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleId {
    Ego,
    Car1,
    Car2,
}

impl VehicleId {
    pub const NON_EGO: [VehicleId; 2] = [VehicleId::Car1, VehicleId::Car2];

    pub fn as_str(self) -> &'static str {
        match self {
            VehicleId::Ego => "ego",
            VehicleId::Car1 => "car1",
            VehicleId::Car2 => "car2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ego" => Some(VehicleId::Ego),
            "car1" => Some(VehicleId::Car1),
            "car2" => Some(VehicleId::Car2),
            _ => None,
        }
    }
}

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Constants of the symbolic model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelParams {
    #[serde(with = "rational::pq_string")]
    pub time_step: Q,
    #[serde(with = "rational::pq_string")]
    pub ego_cruise_speed: Q,
    #[serde(with = "rational::pq_string")]
    pub non_ego_speed_min: Q,
    #[serde(with = "rational::pq_string")]
    pub non_ego_speed_max: Q,
    #[serde(with = "rational::pq_string")]
    pub max_acceleration: Q,
    /// Negative.
    #[serde(with = "rational::pq_string")]
    pub max_braking: Q,
    #[serde(with = "rational::pq_string")]
    pub safe_distance: Q,
    pub max_lane: u8,
    #[serde(with = "rational::pq_string")]
    pub max_lane_change_speed: Q,
    #[serde(with = "rational::pq_string")]
    pub max_lane_change_acceleration: Q,
    /// Magnitude; the lower acceleration bound during a lane change is its negation.
    #[serde(with = "rational::pq_string")]
    pub max_lane_change_braking: Q,
    pub lane_change_spacing_steps: u32,
    /// Longitudinal progress is scaled by this factor on a lane-change step.
    #[serde(with = "rational::pq_string")]
    pub lane_change_pos_factor: Q,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            time_step: q(1),
            ego_cruise_speed: q(5),
            non_ego_speed_min: q(0),
            non_ego_speed_max: q(12),
            max_acceleration: qr(28, 5),
            max_braking: qr(-23, 5),
            safe_distance: q(7),
            max_lane: 2,
            max_lane_change_speed: q(8),
            max_lane_change_acceleration: q(2),
            max_lane_change_braking: q(2),
            lane_change_spacing_steps: 6,
            lane_change_pos_factor: qr(19, 20),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid model parameters: {0}")]
pub struct ParamError(pub String);

impl ModelParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let zero = Q::zero();
        let fail = |m: &str| Err(ParamError(m.to_string()));
        if self.time_step <= zero {
            return fail("time_step must be > 0");
        }
        if !(self.max_braking < zero && zero < self.max_acceleration) {
            return fail("need max_braking < 0 < max_acceleration");
        }
        if self.safe_distance <= zero {
            return fail("safe_distance must be > 0");
        }
        if !(zero <= self.non_ego_speed_min && self.non_ego_speed_min <= self.non_ego_speed_max) {
            return fail("need 0 <= non_ego_speed_min <= non_ego_speed_max");
        }
        if !(self.lane_change_pos_factor > zero && self.lane_change_pos_factor <= Q::one()) {
            return fail("lane_change_pos_factor must lie in (0, 1]");
        }
        if self.max_lane < 2 {
            return fail("max_lane must be >= 2 (ego needs a lane on each side)");
        }
        if self.ego_cruise_speed < zero {
            return fail("ego_cruise_speed must be >= 0");
        }
        if self.max_lane_change_speed < zero
            || self.max_lane_change_acceleration < zero
            || self.max_lane_change_braking < zero
        {
            return fail("lane-change limits must be non-negative");
        }
        Ok(())
    }

    /// Lane the ego is held in.
    pub fn ego_lane(&self) -> u8 {
        self.max_lane / 2
    }

    /// Short stable digest of every parameter, recorded in trace headers and
    /// reports.
    pub fn params_hash(&self) -> String {
        let canon = format!(
            "dt={};cruise={};vmin={};vmax={};amax={};bmax={};safe={};lanes={};lcv={};lca={};lcb={};n={};f={}",
            fmt_pq(&self.time_step),
            fmt_pq(&self.ego_cruise_speed),
            fmt_pq(&self.non_ego_speed_min),
            fmt_pq(&self.non_ego_speed_max),
            fmt_pq(&self.max_acceleration),
            fmt_pq(&self.max_braking),
            fmt_pq(&self.safe_distance),
            self.max_lane,
            fmt_pq(&self.max_lane_change_speed),
            fmt_pq(&self.max_lane_change_acceleration),
            fmt_pq(&self.max_lane_change_braking),
            self.lane_change_spacing_steps,
            fmt_pq(&self.lane_change_pos_factor),
        );
        let digest = Sha256::digest(canon.as_bytes());
        hex::encode(&digest[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VehicleState {
    #[serde(with = "rational::pq_string")]
    pub pos: Q,
    pub lane: u8,
    #[serde(with = "rational::pq_string")]
    pub speed: Q,
    /// Saturates at `lane_change_spacing_steps`.
    pub steps_since_lane_change: u32,
}

impl VehicleState {
    pub fn at_rest(lane: u8, params: &ModelParams) -> Self {
        Self {
            pos: Q::zero(),
            lane,
            speed: Q::zero(),
            steps_since_lane_change: params.lane_change_spacing_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ControlInput {
    #[serde(with = "rational::pq_string")]
    pub acceleration: Q,
    /// One of -1 (left), 0, +1 (right).
    pub lane_delta: i8,
}

impl ControlInput {
    pub fn new(acceleration: Q, lane_delta: i8) -> Self {
        Self { acceleration, lane_delta }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WorldState {
    pub ego: VehicleState,
    pub car1: VehicleState,
    pub car2: VehicleState,
    pub step_index: u32,
}

impl WorldState {
    /// Every car at position 0 and rest; ego in the middle lane, car1 on its
    /// left and car2 on its right.
    pub fn initial(params: &ModelParams) -> Self {
        let mid = params.ego_lane();
        Self {
            ego: VehicleState::at_rest(mid, params),
            car1: VehicleState::at_rest(mid - 1, params),
            car2: VehicleState::at_rest(mid + 1, params),
            step_index: 0,
        }
    }

    pub fn vehicle(&self, id: VehicleId) -> &VehicleState {
        match id {
            VehicleId::Ego => &self.ego,
            VehicleId::Car1 => &self.car1,
            VehicleId::Car2 => &self.car2,
        }
    }
}

/// The transition constraint a step violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransConstraint {
    LaneDelta,
    LaneRange,
    AccelerationRange,
    LaneChangeSpeed,
    LaneChangeNextSpeed,
    LaneChangeAcceleration,
    LaneChangeSpacing,
    SpeedBounds,
}

impl fmt::Display for TransConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TransConstraint::LaneDelta => "lane delta must be -1, 0 or +1",
            TransConstraint::LaneRange => "lane out of range",
            TransConstraint::AccelerationRange => "acceleration outside [max_braking, max_acceleration]",
            TransConstraint::LaneChangeSpeed => "changing lane requires speed <= max_lane_change_speed",
            TransConstraint::LaneChangeNextSpeed => {
                "changing lane requires next(speed) <= max_lane_change_speed"
            }
            TransConstraint::LaneChangeAcceleration => {
                "changing lane requires -max_lane_change_braking <= acceleration <= max_lane_change_acceleration"
            }
            TransConstraint::LaneChangeSpacing => "successive lane changes too close",
            TransConstraint::SpeedBounds => "next(speed) outside non-ego speed bounds",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("precondition violated: {constraint}")]
pub struct PreconditionViolated {
    pub constraint: TransConstraint,
}

fn violated(constraint: TransConstraint) -> PreconditionViolated {
    PreconditionViolated { constraint }
}

/// Trapezoidal position update shared by every vehicle.
fn advance_pos(pos: &Q, speed: &Q, next_speed: &Q, dt: &Q, factor: Option<&Q>) -> Q {
    let mut delta = (speed + next_speed) / q(2) * dt;
    if let Some(f) = factor {
        delta *= f;
    }
    pos + delta
}

/// One transition of a non-ego car.
pub fn step_vehicle(
    state: &VehicleState,
    input: &ControlInput,
    params: &ModelParams,
) -> Result<VehicleState, PreconditionViolated> {
    if !(-1..=1).contains(&input.lane_delta) {
        return Err(violated(TransConstraint::LaneDelta));
    }
    let next_lane = state.lane as i16 + input.lane_delta as i16;
    if next_lane < 0 || next_lane > params.max_lane as i16 {
        return Err(violated(TransConstraint::LaneRange));
    }
    let a = &input.acceleration;
    if *a < params.max_braking || *a > params.max_acceleration {
        return Err(violated(TransConstraint::AccelerationRange));
    }
    let next_speed = (state.speed + a * params.time_step).max(Q::zero());
    let changing = input.lane_delta != 0;
    if changing {
        if state.speed > params.max_lane_change_speed {
            return Err(violated(TransConstraint::LaneChangeSpeed));
        }
        if next_speed > params.max_lane_change_speed {
            return Err(violated(TransConstraint::LaneChangeNextSpeed));
        }
        if *a > params.max_lane_change_acceleration || *a < -params.max_lane_change_braking {
            return Err(violated(TransConstraint::LaneChangeAcceleration));
        }
        if state.steps_since_lane_change < params.lane_change_spacing_steps {
            return Err(violated(TransConstraint::LaneChangeSpacing));
        }
    }
    if next_speed < params.non_ego_speed_min || next_speed > params.non_ego_speed_max {
        return Err(violated(TransConstraint::SpeedBounds));
    }
    let factor = changing.then_some(&params.lane_change_pos_factor);
    Ok(VehicleState {
        pos: advance_pos(&state.pos, &state.speed, &next_speed, &params.time_step, factor),
        lane: next_lane as u8,
        speed: next_speed,
        steps_since_lane_change: if changing {
            0
        } else {
            (state.steps_since_lane_change + 1).min(params.lane_change_spacing_steps)
        },
    })
}

/// Ego's emergency condition against one car: the car is in the ego's lane,
/// not behind it, and the time to reach it at the current speed is within
/// the time needed to stop.
pub fn collision_next(ego: &VehicleState, car: &VehicleState, params: &ModelParams) -> bool {
    if car.lane != ego.lane || car.pos < ego.pos || ego.speed <= Q::zero() {
        return false;
    }
    let time_to_stop = ego.speed / -params.max_braking;
    (car.pos - ego.pos) / ego.speed <= time_to_stop
}

/// Ego transition. Brakes at `max_braking` when a collision is imminent,
/// otherwise accelerates toward the cruise speed without overshooting. Above
/// cruise speed with no threat the ego keeps its speed.
pub fn ego_step(world: &WorldState, params: &ModelParams) -> VehicleState {
    let ego = &world.ego;
    let threat = collision_next(ego, &world.car1, params) || collision_next(ego, &world.car2, params);
    let next_speed = if threat {
        (ego.speed + params.max_braking * params.time_step).max(Q::zero())
    } else if ego.speed < params.ego_cruise_speed {
        params
            .ego_cruise_speed
            .min(ego.speed + params.max_acceleration * params.time_step)
    } else {
        ego.speed
    };
    VehicleState {
        pos: advance_pos(&ego.pos, &ego.speed, &next_speed, &params.time_step, None),
        lane: ego.lane,
        speed: next_speed,
        steps_since_lane_change: ego.steps_since_lane_change,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantViolation {
    pub first: VehicleId,
    pub second: VehicleId,
    #[serde(with = "rational::pq_string")]
    pub gap: Q,
}

/// Pairs of vehicles sharing a lane with `|Δpos| <= safe_distance`.
pub fn check_invariants(world: &WorldState, params: &ModelParams) -> Vec<InvariantViolation> {
    const PAIRS: [(VehicleId, VehicleId); 3] = [
        (VehicleId::Ego, VehicleId::Car1),
        (VehicleId::Ego, VehicleId::Car2),
        (VehicleId::Car1, VehicleId::Car2),
    ];
    PAIRS
        .iter()
        .filter_map(|&(a, b)| {
            let (va, vb) = (world.vehicle(a), world.vehicle(b));
            let gap = rational::abs(va.pos - vb.pos);
            (va.lane == vb.lane && gap <= params.safe_distance).then_some(InvariantViolation {
                first: a,
                second: b,
                gap,
            })
        })
        .collect()
}

/// Whole-world transition: the ego reacts to the current state while both
/// non-egos apply their inputs.
pub fn step_world(
    world: &WorldState,
    car1_input: &ControlInput,
    car2_input: &ControlInput,
    params: &ModelParams,
) -> Result<WorldState, (VehicleId, PreconditionViolated)> {
    let car1 = step_vehicle(&world.car1, car1_input, params).map_err(|e| (VehicleId::Car1, e))?;
    let car2 = step_vehicle(&world.car2, car2_input, params).map_err(|e| (VehicleId::Car2, e))?;
    Ok(WorldState {
        ego: ego_step(world, params),
        car1,
        car2,
        step_index: world.step_index + 1,
    })
}
