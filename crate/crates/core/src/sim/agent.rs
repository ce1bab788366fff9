//! Ego agents: perception followed by the braking policy of the symbolic
//! model, evaluated at every simulation step.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SimConfig, VehicleSample};
use crate::model::VehicleId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
#[allow(clippy::upper_case_acronyms)]
pub enum EgoAgentSpec {
    /// Perfect perception.
    OracleACC,
    /// Each non-ego observation is dropped with `dropout_prob` per sample,
    /// and observations describe the world `detection_latency` seconds ago.
    FaultyPerceptionACC { dropout_prob: f64, detection_latency: f64 },
}

impl EgoAgentSpec {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            EgoAgentSpec::OracleACC => Ok(()),
            EgoAgentSpec::FaultyPerceptionACC { dropout_prob, detection_latency } => {
                if !(0.0..=1.0).contains(dropout_prob) {
                    return Err(format!("dropout_prob {dropout_prob} outside [0, 1]"));
                }
                if !detection_latency.is_finite() || *detection_latency < 0.0 {
                    return Err(format!("detection_latency {detection_latency} must be finite and >= 0"));
                }
                Ok(())
            }
        }
    }

    /// `oracle` or `faulty:<dropout>:<latency>`.
    pub fn parse(text: &str) -> Result<Self, String> {
        let parts: Vec<&str> = text.trim().split(':').collect();
        let spec = match parts.as_slice() {
            ["oracle"] => EgoAgentSpec::OracleACC,
            ["faulty", p, l] => EgoAgentSpec::FaultyPerceptionACC {
                dropout_prob: p.parse().map_err(|_| format!("bad dropout probability `{p}`"))?,
                detection_latency: l.parse().map_err(|_| format!("bad latency `{l}`"))?,
            },
            _ => return Err(format!("unknown agent `{text}`; expected `oracle` or `faulty:<dropout>:<latency>`")),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Detection latency in seconds; zero for the oracle.
    pub fn latency(&self) -> f64 {
        match self {
            EgoAgentSpec::OracleACC => 0.0,
            EgoAgentSpec::FaultyPerceptionACC { detection_latency, .. } => *detection_latency,
        }
    }

    pub fn label(&self) -> String {
        match self {
            EgoAgentSpec::OracleACC => "oracle".into(),
            EgoAgentSpec::FaultyPerceptionACC { dropout_prob, detection_latency } => {
                format!("faulty:{dropout_prob}:{detection_latency}")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedCar {
    pub id: VehicleId,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Observation {
    pub cars: Vec<ObservedCar>,
}

/// Per-sample draws for both non-egos: `true` means the observation is
/// dropped. Two uniform draws are taken per call whatever the agent, so the
/// random stream does not depend on the dropout probability.
fn draw_drops(agent: &EgoAgentSpec, rng: &mut ChaCha8Rng) -> [bool; 2] {
    let draws: [f64; 2] = [rng.random(), rng.random()];
    let dropout = match agent {
        EgoAgentSpec::OracleACC => 0.0,
        EgoAgentSpec::FaultyPerceptionACC { dropout_prob, .. } => *dropout_prob,
    };
    draws.map(|r| r < dropout)
}

/// Memoryless view of one sample: ground truth minus the dropped cars.
pub fn ego_observe(world: &[VehicleSample; 3], agent: &EgoAgentSpec, rng: &mut ChaCha8Rng) -> Observation {
    let drops = draw_drops(agent, rng);
    let cars = [VehicleId::Car1, VehicleId::Car2]
        .iter()
        .zip(drops)
        .zip(&world[1..])
        .filter(|((_, dropped), _)| !dropped)
        .map(|((&id, _), v)| ObservedCar { id, x: v.x, y: v.y, speed: v.speed })
        .collect();
    Observation { cars }
}

/// Perception with track state. A car is reported only once it has been
/// detected, and detection happens `detection_latency` seconds after the
/// car was last dropped (or after the start of the run). A dropout thus
/// hides the car for at least the latency.
pub struct Perception {
    agent: EgoAgentSpec,
    rng: ChaCha8Rng,
    hidden_until: [f64; 2],
}

impl Perception {
    pub fn new(agent: EgoAgentSpec, rng: ChaCha8Rng) -> Self {
        let latency = agent.latency();
        Self { agent, rng, hidden_until: [latency; 2] }
    }

    pub fn observe(&mut self, t: f64, world: &[VehicleSample; 3], cfg: &SimConfig) -> Observation {
        let latency = self.agent.latency();
        let drops = draw_drops(&self.agent, &mut self.rng);
        let eps = cfg.dt * 1e-6;
        let mut cars = Vec::with_capacity(2);
        for (k, id) in [VehicleId::Car1, VehicleId::Car2].into_iter().enumerate() {
            if drops[k] {
                self.hidden_until[k] = self.hidden_until[k].max(t + latency);
                continue;
            }
            if t + eps >= self.hidden_until[k] {
                let v = &world[k + 1];
                cars.push(ObservedCar { id, x: v.x, y: v.y, speed: v.speed });
            }
        }
        Observation { cars }
    }
}

/// Bumper gap the ego keeps to a car ahead when standing still.
pub const STANDSTILL_GAP: f64 = 2.0;

/// Braking policy of the symbolic model at the fine time step: full braking
/// when a car intruding into the ego's lane ahead is within the distance
/// covered during the time needed to stop (plus [`STANDSTILL_GAP`]),
/// otherwise approach the cruise speed. The gap is measured bumper to
/// bumper.
pub fn ego_acceleration(ego: &VehicleSample, obs: &Observation, cfg: &SimConfig) -> f64 {
    let corridor = (cfg.lane_width + cfg.vehicle_width) / 2.0;
    let v = ego.speed;
    let threat = obs.cars.iter().any(|c| {
        let gap = c.x - ego.x - cfg.vehicle_length;
        (c.y - ego.y).abs() < corridor && c.x >= ego.x && gap <= v * v / -cfg.max_braking + STANDSTILL_GAP
    });
    if threat {
        cfg.max_braking
    } else if v < cfg.ego_cruise_speed {
        ((cfg.ego_cruise_speed - v) / cfg.dt).min(cfg.max_acceleration)
    } else {
        0.0
    }
}

/// Throttle and brake in [0, 1] for an acceleration command.
pub fn pedals(a: f64, cfg: &SimConfig) -> (f64, f64) {
    if a > 0.0 {
        ((a / cfg.max_acceleration).min(1.0), 0.0)
    } else if a < 0.0 {
        (0.0, (a / cfg.max_braking).min(1.0))
    } else {
        (0.0, 0.0)
    }
}
