//! Bounded witness search over the abstract transition system.
//!
//! Given a two-phase scenario, [`find_witness`] looks for a finite trace from
//! the fixed initial state in which the first grid configuration holds at
//! some step and the second at a strictly later step, while every transition
//! respects the model constraints and every state respects the pairwise
//! separation invariant.
//!
//! Non-ego accelerations are drawn from a finite menu. The search is
//! best-first on a distance-to-target heuristic with duplicate detection on
//! exact states, and prunes nodes whose reachability envelope cannot reach
//! the remaining phases within the step bound.

mod exhaustive;
mod trace_io;
mod validate;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;

use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use exhaustive::{exhaustive_reach, ReachError, ReachSet};
pub use trace_io::{read_trace_jsonl, write_trace_jsonl, TraceHeader, TraceIoError};
pub use validate::{validate_trace, TraceDiagnostic, ValidationReport};

use crate::catalog::{GridConfig, ReachObjective, ScenarioSpec};
use crate::model::grid::{grid_cells, Band, GridBounds, GridCell};
use crate::model::{check_invariants, ego_step, step_vehicle, ControlInput, ModelParams, VehicleState, WorldState};
use crate::rational::{self, floor_scaled, q, Q};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchConfig {
    pub max_steps: u32,
    pub accel_menu: Vec<Q>,
    pub allow_lane_actions: bool,
    /// Maximum number of search nodes generated.
    pub node_budget: usize,
    pub rng_seed: u64,
}

impl SearchConfig {
    /// Menu `{max_braking, -2, 0, +2, max_acceleration}`, 30 steps.
    pub fn default_for(params: &ModelParams) -> Self {
        Self {
            max_steps: 30,
            accel_menu: vec![params.max_braking, q(-2), q(0), q(2), params.max_acceleration],
            allow_lane_actions: true,
            node_budget: 400_000,
            rng_seed: 0,
        }
    }

    /// Three-entry menu `{max_braking, 0, max_acceleration}` used on the
    /// reduced model.
    pub fn coarse(params: &ModelParams, max_steps: u32) -> Self {
        Self {
            max_steps,
            accel_menu: vec![params.max_braking, q(0), params.max_acceleration],
            ..Self::default_for(params)
        }
    }

    pub fn validate(&self, params: &ModelParams) -> Result<(), SearchError> {
        if self.max_steps < 2 {
            return Err(SearchError::InvalidConfig("max_steps must be >= 2".into()));
        }
        if self.accel_menu.is_empty() {
            return Err(SearchError::InvalidConfig("accel_menu must not be empty".into()));
        }
        if let Some(a) = self
            .accel_menu
            .iter()
            .find(|a| **a < params.max_braking || **a > params.max_acceleration)
        {
            return Err(SearchError::InvalidConfig(format!(
                "menu value {} outside [max_braking, max_acceleration]",
                rational::Decimal(a)
            )));
        }
        Ok(())
    }
}

/// A witness: `states.len() == inputs.len() + 1`, `inputs[k]` drives
/// `states[k]` to `states[k + 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractTrace {
    pub spec_id: String,
    pub states: Vec<WorldState>,
    pub inputs: Vec<(ControlInput, ControlInput)>,
    pub phase1_index: usize,
    pub phase2_index: usize,
}

impl AbstractTrace {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NotFoundReason {
    Budget,
    Depth,
    InfeasibleAtInit,
}

impl fmt::Display for NotFoundReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NotFoundReason::Budget => "budget",
            NotFoundReason::Depth => "depth",
            NotFoundReason::InfeasibleAtInit => "infeasible-at-init",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("no witness found ({reason})")]
    NotFound { reason: NotFoundReason },
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
}

/// Non-ego actions applicable from `car`, deduplicated by resulting state.
pub(crate) fn car_moves(
    car: &VehicleState,
    params: &ModelParams,
    cfg: &SearchConfig,
) -> Vec<(VehicleState, ControlInput)> {
    let deltas: &[i8] = if cfg.allow_lane_actions { &[0, -1, 1] } else { &[0] };
    let mut out: Vec<(VehicleState, ControlInput)> = Vec::new();
    for &d in deltas {
        for a in &cfg.accel_menu {
            let input = ControlInput::new(*a, d);
            if let Ok(next) = step_vehicle(car, &input, params) {
                if !out.iter().any(|(s, _)| *s == next) {
                    out.push((next, input));
                }
            }
        }
    }
    out
}

/// All successor worlds satisfying the transition constraints and the
/// separation invariant.
pub(crate) fn successors(
    world: &WorldState,
    params: &ModelParams,
    cfg: &SearchConfig,
) -> Vec<(WorldState, ControlInput, ControlInput)> {
    let ego = ego_step(world, params);
    let m1 = car_moves(&world.car1, params, cfg);
    let m2 = car_moves(&world.car2, params, cfg);
    let mut out = Vec::with_capacity(m1.len() * m2.len());
    for (c1, i1) in &m1 {
        for (c2, i2) in &m2 {
            let next = WorldState {
                ego: ego.clone(),
                car1: c1.clone(),
                car2: c2.clone(),
                step_index: world.step_index + 1,
            };
            if check_invariants(&next, params).is_empty() {
                out.push((next, i1.clone(), i2.clone()));
            }
        }
    }
    out
}

// Heuristic weights, in meters. A step of depth costs `STEP_WEIGHT / MM`.
const LANE_WEIGHT: i64 = 10;
const STEP_WEIGHT: i64 = 300;
const WAIT_WEIGHT: i64 = 1;
const PHASE_WEIGHT: i64 = 1_000;
const MM: i64 = 1_000;

fn distance_to_band(delta: Q, lo: Q, hi: Q) -> Q {
    if delta < lo {
        lo - delta
    } else if delta > hi {
        delta - hi
    } else {
        Q::zero()
    }
}

fn car_cost(ego: &VehicleState, car: &VehicleState, cell: GridCell, bounds: &GridBounds, params: &ModelParams) -> Q {
    let (Some(lane), Some(band)) = (cell.target_lane(ego.lane), cell.band()) else {
        return Q::zero();
    };
    let (lo, hi) = bounds.delta_range(band);
    let delta = car.pos - ego.pos;
    let mut lanes = (car.lane as i64 - lane as i64).abs();
    // A car in the ego lane cannot pass the ego without leaving the lane.
    let crossing = (delta > Q::zero() && hi < Q::zero()) || (delta < Q::zero() && lo > Q::zero());
    if crossing && car.lane == ego.lane {
        let side = |s: i64| 1 + (s - lane as i64).abs();
        let mut best = i64::MAX;
        if ego.lane > 0 {
            best = best.min(side(ego.lane as i64 - 1));
        }
        if ego.lane < params.max_lane {
            best = best.min(side(ego.lane as i64 + 1));
        }
        lanes = best;
    }
    let mut cost = q(lanes * LANE_WEIGHT) + distance_to_band(delta, lo, hi);
    if lanes > 0 {
        let wait = params.lane_change_spacing_steps.saturating_sub(car.steps_since_lane_change);
        cost += q(wait as i64 * WAIT_WEIGHT);
        if car.speed > params.max_lane_change_speed {
            cost += car.speed - params.max_lane_change_speed;
        }
    }
    cost
}

fn band_rank(cell: GridCell) -> i8 {
    match cell.band() {
        Some(Band::Ahead) => 1,
        Some(Band::Beside) | None => 0,
        Some(Band::Behind) => -1,
    }
}

/// Cost of fixing the longitudinal order of the two cars when the target
/// puts them in one lane in a fixed order.
fn order_cost(world: &WorldState, target: &GridConfig, params: &ModelParams) -> Q {
    let lane = world.ego.lane;
    if target.car1.target_lane(lane) != target.car2.target_lane(lane) {
        return Q::zero();
    }
    let want = band_rank(target.car1) - band_rank(target.car2);
    let gap = world.car1.pos - world.car2.pos;
    let wrong = (want > 0 && gap < Q::zero()) || (want < 0 && gap > Q::zero());
    if !wrong {
        return Q::zero();
    }
    let mut cost = rational::abs(gap) + params.safe_distance;
    if world.car1.lane == world.car2.lane {
        cost += q(2 * LANE_WEIGHT);
    }
    cost
}

fn heuristic(world: &WorldState, target: &GridConfig, bounds: &GridBounds, params: &ModelParams) -> Q {
    car_cost(&world.ego, &world.car1, target.car1, bounds, params)
        + car_cost(&world.ego, &world.car2, target.car2, bounds, params)
        + order_cost(world, target, params)
}

/// Slack for floating-point rounding in the envelope. Positions stay below
/// a few kilometers, so accumulated error is many orders of magnitude
/// smaller.
const ENVELOPE_EPS: f64 = 1e-6;

/// Over-approximation of where each vehicle can be `k` steps ahead, used to
/// discard nodes that provably cannot complete the objective in time.
struct Envelope {
    /// `delta_lo[c][k]..=delta_hi[c][k]` bounds `car_c.pos - ego.pos`.
    delta_lo: [Vec<f64>; 2],
    delta_hi: [Vec<f64>; 2],
    lane: [u8; 2],
    /// Earliest transition index at which a lane change may start.
    first_change: [Option<u32>; 2],
    spacing: u32,
    ego_lane: u8,
}

struct BandF64 {
    lo: f64,
    hi: f64,
}

impl Envelope {
    fn compute(world: &WorldState, params: &ModelParams, cfg: &SearchConfig, horizon: u32) -> Self {
        let f = rational::to_f64;
        let dt = f(&params.time_step);
        let a_hi = f(cfg.accel_menu.iter().max().expect("menu validated non-empty"));
        let a_lo = f(cfg.accel_menu.iter().min().expect("menu validated non-empty"));
        let (brake, acc, cruise) = (f(&params.max_braking), f(&params.max_acceleration), f(&params.ego_cruise_speed));
        let (vmin, vmax) = (f(&params.non_ego_speed_min), f(&params.non_ego_speed_max));
        let lc = f(&params.lane_change_pos_factor);
        let (f_lo, f_hi) = if cfg.allow_lane_actions { (lc.min(1.0), lc.max(1.0)) } else { (1.0, 1.0) };
        let n = horizon as usize + 1;

        let mut ego_min = Vec::with_capacity(n);
        let mut ego_max = Vec::with_capacity(n);
        let (mut pmin, mut vmin_e) = (f(&world.ego.pos), f(&world.ego.speed));
        let (mut pmax, mut vmax_e) = (pmin, vmin_e);
        ego_min.push(pmin);
        ego_max.push(pmax);
        for _ in 1..n {
            let v2 = (vmin_e + brake * dt).max(0.0);
            pmin += (vmin_e + v2) / 2.0 * dt;
            vmin_e = v2;
            let v2 = if vmax_e < cruise { cruise.min(vmax_e + acc * dt) } else { vmax_e };
            pmax += (vmax_e + v2) / 2.0 * dt;
            vmax_e = v2;
            ego_min.push(pmin);
            ego_max.push(pmax);
        }

        let mut delta_lo: [Vec<f64>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
        let mut delta_hi: [Vec<f64>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
        let mut first_change = [None, None];
        let lcs = f(&params.max_lane_change_speed);
        for (c, car) in [&world.car1, &world.car2].into_iter().enumerate() {
            let (mut lo_p, mut lo_v) = (f(&car.pos), f(&car.speed));
            let (mut hi_p, mut hi_v) = (lo_p, lo_v);
            delta_lo[c].push(lo_p - ego_max[0]);
            delta_hi[c].push(hi_p - ego_min[0]);
            for k in 1..n {
                let v2 = (lo_v + a_lo * dt).max(0.0).max(vmin);
                lo_p += (lo_v + v2) / 2.0 * dt * f_lo;
                lo_v = v2;
                let v2 = (hi_v + a_hi * dt).max(0.0).min(vmax);
                hi_p += (hi_v + v2) / 2.0 * dt * f_hi;
                hi_v = v2;
                delta_lo[c].push(lo_p - ego_max[k]);
                delta_hi[c].push(hi_p - ego_min[k]);
            }
            if cfg.allow_lane_actions {
                let wait = params.lane_change_spacing_steps.saturating_sub(car.steps_since_lane_change);
                let excess = f(&car.speed) - lcs;
                let slow = if excess <= ENVELOPE_EPS {
                    Some(0)
                } else if a_lo < 0.0 {
                    Some(((excess - ENVELOPE_EPS) / (-a_lo * dt)).ceil() as u32)
                } else {
                    None
                };
                first_change[c] = slow.map(|s| s.max(wait));
            }
        }
        Self {
            delta_lo,
            delta_hi,
            lane: [world.car1.lane, world.car2.lane],
            first_change,
            spacing: params.lane_change_spacing_steps,
            ego_lane: world.ego.lane,
        }
    }

    fn max_lane_changes(&self, c: usize, k: u32) -> u32 {
        match self.first_change[c] {
            Some(t0) if k > t0 => 1 + (k - t0 - 1) / (self.spacing + 1),
            _ => 0,
        }
    }

    fn cell_possible(&self, c: usize, cell: GridCell, k: u32, bounds: &[BandF64; 3]) -> bool {
        let (Some(lane), Some(band)) = (cell.target_lane(self.ego_lane), cell.band()) else {
            return false;
        };
        let need = (self.lane[c] as i64 - lane as i64).unsigned_abs() as u32;
        if need > self.max_lane_changes(c, k) {
            return false;
        }
        let b = &bounds[band as usize];
        let k = k as usize;
        self.delta_hi[c][k] >= b.lo - ENVELOPE_EPS && self.delta_lo[c][k] <= b.hi + ENVELOPE_EPS
    }

    fn config_possible(&self, cfg: &GridConfig, k: u32, bounds: &[BandF64; 3]) -> bool {
        self.cell_possible(0, cfg.car1, k, bounds) && self.cell_possible(1, cfg.car2, k, bounds)
    }
}

fn band_table(bounds: &GridBounds) -> [BandF64; 3] {
    [Band::Ahead, Band::Beside, Band::Behind].map(|b| {
        let (lo, hi) = bounds.delta_range(b);
        BandF64 { lo: rational::to_f64(&lo), hi: rational::to_f64(&hi) }
    })
}

/// Whether a node can still complete the objective within `horizon` steps
/// according to the envelope over-approximation.
fn may_complete(
    world: &WorldState,
    in_phase2: bool,
    objective: &ReachObjective,
    params: &ModelParams,
    cfg: &SearchConfig,
    bands: &[BandF64; 3],
    horizon: u32,
) -> bool {
    if horizon == 0 {
        return false;
    }
    let env = Envelope::compute(world, params, cfg, horizon);
    let start = if in_phase2 {
        0
    } else {
        match (0..horizon).find(|&k| env.config_possible(&objective.first, k, bands)) {
            Some(k) => k,
            None => return false,
        }
    };
    (start + 1..=horizon).any(|k| env.config_possible(&objective.second, k, bands))
}

type DedupKey = (bool, [i64; 19]);

/// Exact state identity packed into integers.
fn dedup_key(world: &WorldState, phase1: bool) -> DedupKey {
    let mut k = [0i64; 19];
    k[0] = world.step_index as i64;
    let split = |v: &Q| (*v.numer(), *v.denom());
    for (i, v) in [&world.ego, &world.car1, &world.car2].into_iter().enumerate() {
        let b = 1 + i * 6;
        (k[b], k[b + 1]) = split(&v.pos);
        (k[b + 2], k[b + 3]) = split(&v.speed);
        k[b + 4] = v.lane as i64;
        k[b + 5] = v.steps_since_lane_change as i64;
    }
    (phase1, k)
}

struct Node {
    world: WorldState,
    phase1: Option<usize>,
    parent: Option<usize>,
    via: Option<(ControlInput, ControlInput)>,
}

/// Searches for a witness of `spec` from the standard initial state.
pub fn find_witness(spec: &ScenarioSpec, params: &ModelParams, cfg: &SearchConfig) -> Result<AbstractTrace, SearchError> {
    find_witness_from(spec, WorldState::initial(params), params, cfg)
}

/// Like [`find_witness`] from an arbitrary initial world.
pub fn find_witness_from(
    spec: &ScenarioSpec,
    init: WorldState,
    params: &ModelParams,
    cfg: &SearchConfig,
) -> Result<AbstractTrace, SearchError> {
    params.validate().map_err(|e| SearchError::InvalidConfig(e.to_string()))?;
    cfg.validate(params)?;
    let not_found = |reason| SearchError::NotFound { reason };
    if !check_invariants(&init, params).is_empty() {
        return Err(not_found(NotFoundReason::InfeasibleAtInit));
    }
    if cfg.node_budget == 0 {
        return Err(not_found(NotFoundReason::Budget));
    }

    let bounds = GridBounds::abstract_default();
    let objective = spec.objective();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let start_step = init.step_index;
    let cells = |w: &WorldState| (grid_cells(&w.ego, &w.car1, &bounds), grid_cells(&w.ego, &w.car2, &bounds));
    let bands = band_table(&bounds);
    let priority = |w: &WorldState, phase1: Option<usize>| -> i64 {
        let h = match phase1 {
            None => heuristic(w, &objective.first, &bounds, params) + order_cost(w, &objective.second, params) + q(PHASE_WEIGHT),
            Some(_) => heuristic(w, &objective.second, &bounds, params),
        };
        floor_scaled(&h, MM) + (w.step_index - start_step) as i64 * STEP_WEIGHT
    };

    let (c1, c2) = cells(&init);
    let root_phase1 = objective.phase1_holds(c1, c2).then_some(0);
    if !may_complete(&init, root_phase1.is_some(), &objective, params, cfg, &bands, cfg.max_steps) {
        return Err(not_found(NotFoundReason::Depth));
    }

    let mut nodes = vec![Node { world: init.clone(), phase1: root_phase1, parent: None, via: None }];
    let mut seen: HashSet<DedupKey> = HashSet::new();
    seen.insert(dedup_key(&init, root_phase1.is_some()));
    let mut open = BinaryHeap::new();
    open.push(Reverse((priority(&init, root_phase1), rng.random::<u64>(), 0usize)));

    while let Some(Reverse((_, _, idx))) = open.pop() {
        let depth = nodes[idx].world.step_index - start_step;
        if depth >= cfg.max_steps {
            continue;
        }
        let phase1 = nodes[idx].phase1;
        for (child, i1, i2) in successors(&nodes[idx].world, params, cfg) {
            let (c1, c2) = cells(&child);
            let child_depth = depth as usize + 1;
            if let Some(p1) = phase1 {
                if objective.phase2_holds(c1, c2) {
                    nodes.push(Node { world: child, phase1, parent: Some(idx), via: Some((i1, i2)) });
                    return Ok(reconstruct(&nodes, nodes.len() - 1, spec, p1, child_depth));
                }
            }
            let child_phase1 = phase1.or_else(|| objective.phase1_holds(c1, c2).then_some(child_depth));
            let key = dedup_key(&child, child_phase1.is_some());
            if seen.contains(&key) {
                continue;
            }
            let remaining = cfg.max_steps - depth - 1;
            if !may_complete(&child, key.0, &objective, params, cfg, &bands, remaining) {
                seen.insert(key);
                continue;
            }
            if nodes.len() >= cfg.node_budget {
                return Err(not_found(NotFoundReason::Budget));
            }
            seen.insert(key);
            let pri = priority(&child, child_phase1);
            nodes.push(Node { world: child, phase1: child_phase1, parent: Some(idx), via: Some((i1, i2)) });
            open.push(Reverse((pri, rng.random::<u64>(), nodes.len() - 1)));
        }
    }
    Err(not_found(NotFoundReason::Depth))
}

fn reconstruct(nodes: &[Node], last: usize, spec: &ScenarioSpec, phase1: usize, phase2: usize) -> AbstractTrace {
    let mut states = Vec::new();
    let mut inputs = Vec::new();
    let mut cur = Some(last);
    while let Some(i) = cur {
        states.push(nodes[i].world.clone());
        if let Some(via) = &nodes[i].via {
            inputs.push(via.clone());
        }
        cur = nodes[i].parent;
    }
    states.reverse();
    inputs.reverse();
    AbstractTrace { spec_id: spec.id.clone(), states, inputs, phase1_index: phase1, phase2_index: phase2 }
}

/// Cell sets of both cars along an abstract trace.
pub fn abstract_observations(states: &[WorldState], bounds: &GridBounds) -> Vec<(crate::CellSet, crate::CellSet)> {
    states
        .iter()
        .map(|w| (grid_cells(&w.ego, &w.car1, bounds), grid_cells(&w.ego, &w.car2, bounds)))
        .collect()
}
