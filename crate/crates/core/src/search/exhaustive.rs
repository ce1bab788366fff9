//! Breadth-first enumeration of every reachable (first, second) pair.
//! Used as a reference for the best-first search on small instances.

use std::collections::HashMap;

use thiserror::Error;

use crate::catalog::GridConfig;
use crate::model::grid::{grid_cells, GridBounds};
use crate::model::{check_invariants, ModelParams, WorldState};

use super::{successors, SearchConfig};

pub const MAX_EXHAUSTIVE_DEPTH: u32 = 8;
pub const MAX_EXHAUSTIVE_MENU: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReachError {
    #[error("layer {depth} holds more than {budget} states")]
    BudgetExceeded { depth: u32, budget: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Set of ordered grid-configuration pairs, stored as one 64-bit row per
/// first configuration.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct ReachSet {
    rows: [u64; 64],
}

impl Default for ReachSet {
    fn default() -> Self {
        Self { rows: [0; 64] }
    }
}

impl std::fmt::Debug for ReachSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.iter().map(|(a, b)| (a.numbers(), b.numbers()))).finish()
    }
}

impl ReachSet {
    pub fn insert(&mut self, first: GridConfig, second: GridConfig) {
        self.rows[first.index()] |= 1 << second.index();
    }

    pub fn contains(&self, first: GridConfig, second: GridConfig) -> bool {
        self.rows[first.index()] & (1 << second.index()) != 0
    }

    pub fn len(&self) -> usize {
        self.rows.iter().map(|r| r.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(|r| *r == 0)
    }

    pub fn is_subset(&self, other: &ReachSet) -> bool {
        self.rows.iter().zip(&other.rows).all(|(a, b)| a & !b == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (GridConfig, GridConfig)> + '_ {
        (0..64).flat_map(move |a| {
            let row = self.rows[a];
            (0..64)
                .filter(move |b| row & (1 << b) != 0)
                .map(move |b| (GridConfig::from_index(a), GridConfig::from_index(b)))
        })
    }

    /// Records `before × now`.
    fn insert_product(&mut self, before: u64, now: u64) {
        let mut m = before;
        while m != 0 {
            let a = m.trailing_zeros() as usize;
            self.rows[a] |= now;
            m &= m - 1;
        }
    }
}

/// Enumerates all states reachable within `depth` steps from the initial
/// state, carrying for each state the union over its incoming paths of the
/// configurations that held strictly earlier. `cfg.node_budget` caps the
/// number of distinct states in a single layer.
pub fn exhaustive_reach(params: &ModelParams, cfg: &SearchConfig, depth: u32) -> Result<ReachSet, ReachError> {
    params.validate().map_err(|e| ReachError::InvalidInput(e.to_string()))?;
    if depth > MAX_EXHAUSTIVE_DEPTH {
        return Err(ReachError::InvalidInput(format!("depth {depth} exceeds {MAX_EXHAUSTIVE_DEPTH}")));
    }
    if cfg.accel_menu.is_empty() || cfg.accel_menu.len() > MAX_EXHAUSTIVE_MENU {
        return Err(ReachError::InvalidInput(format!(
            "menu must have 1..={MAX_EXHAUSTIVE_MENU} entries, got {}",
            cfg.accel_menu.len()
        )));
    }
    if cfg.accel_menu.iter().any(|a| *a < params.max_braking || *a > params.max_acceleration) {
        return Err(ReachError::InvalidInput("menu value outside acceleration range".into()));
    }

    let bounds = GridBounds::abstract_default();
    let mask = |w: &WorldState| GridConfig::mask_of(grid_cells(&w.ego, &w.car1, &bounds), grid_cells(&w.ego, &w.car2, &bounds));
    let mut result = ReachSet::default();
    let init = WorldState::initial(params);
    if !check_invariants(&init, params).is_empty() {
        return Ok(result);
    }
    let m0 = mask(&init);
    let mut layer: HashMap<WorldState, u64> = HashMap::from([(init, m0)]);
    for d in 1..=depth {
        let mut next: HashMap<WorldState, u64> = HashMap::new();
        for (world, before) in &layer {
            for (child, _, _) in successors(world, params, cfg) {
                let now = mask(&child);
                result.insert_product(*before, now);
                *next.entry(child).or_insert(0) |= before | now;
            }
            if next.len() > cfg.node_budget {
                return Err(ReachError::BudgetExceeded { depth: d, budget: cfg.node_budget });
            }
        }
        layer = next;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(p: &ModelParams) -> SearchConfig {
        let mut c = SearchConfig::coarse(p, 6);
        c.node_budget = 5_000_000;
        c
    }

    #[test]
    fn depth_zero_is_empty() {
        let p = ModelParams::default();
        assert!(exhaustive_reach(&p, &cfg(&p), 0).unwrap().is_empty());
    }

    #[test]
    fn depth_one_pairs_start_from_initial_config() {
        let p = ModelParams::default();
        let r = exhaustive_reach(&p, &cfg(&p), 1).unwrap();
        let init = GridConfig::from_numbers(4, 5).unwrap();
        assert!(r.contains(init, init));
        assert!(r.iter().all(|(a, _)| a == init));
    }

    #[test]
    fn monotone_in_depth() {
        let p = ModelParams::default();
        let c = cfg(&p);
        let mut prev = ReachSet::default();
        for d in 0..=3 {
            let r = exhaustive_reach(&p, &c, d).unwrap();
            assert!(prev.is_subset(&r), "depth {d}");
            prev = r;
        }
    }

    #[test]
    fn rejects_large_inputs() {
        let p = ModelParams::default();
        assert!(matches!(exhaustive_reach(&p, &cfg(&p), 9), Err(ReachError::InvalidInput(_))));
        let wide = SearchConfig::default_for(&p);
        assert!(matches!(exhaustive_reach(&p, &wide, 2), Err(ReachError::InvalidInput(_))));
    }

    #[test]
    fn budget_exceeded() {
        let p = ModelParams::default();
        let mut c = cfg(&p);
        c.node_budget = 3;
        assert!(matches!(exhaustive_reach(&p, &c, 3), Err(ReachError::BudgetExceeded { .. })));
    }
}
