//! Abstract scenarios: a first grid configuration that must be reached, then
//! a second one reached at a strictly later step.

mod dsl;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dsl::{parse_scenario_dsl, to_dsl, DslError};

use crate::model::grid::{grid_cells, CellSet, GridBounds, GridCell};
use crate::model::WorldState;

/// Cells of both non-egos in one scene. Neither may be `Outside`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridConfig {
    pub car1: GridCell,
    pub car2: GridCell,
}

impl GridConfig {
    /// Builds from cell numbers 1..=8.
    pub fn from_numbers(car1: u8, car2: u8) -> Option<Self> {
        Some(Self { car1: GridCell::from_number(car1)?, car2: GridCell::from_number(car2)? })
    }

    pub fn new(car1: GridCell, car2: GridCell) -> Option<Self> {
        (car1 != GridCell::Outside && car2 != GridCell::Outside).then_some(Self { car1, car2 })
    }

    pub fn numbers(&self) -> [u8; 2] {
        [self.car1.number().unwrap_or(0), self.car2.number().unwrap_or(0)]
    }

    /// Dense index in `0..64`.
    pub fn index(&self) -> usize {
        let [a, b] = self.numbers();
        (a as usize - 1) * 8 + (b as usize - 1)
    }

    pub fn from_index(i: usize) -> Self {
        Self::from_numbers((i / 8) as u8 + 1, (i % 8) as u8 + 1).expect("index in 0..64")
    }

    /// Membership semantics: each car's cell set contains its required cell.
    pub fn holds(&self, car1_cells: CellSet, car2_cells: CellSet) -> bool {
        car1_cells.contains(self.car1) && car2_cells.contains(self.car2)
    }

    pub fn holds_in(&self, world: &WorldState, bounds: &GridBounds) -> bool {
        self.holds(grid_cells(&world.ego, &world.car1, bounds), grid_cells(&world.ego, &world.car2, bounds))
    }

    /// Bitmask over the 64 configurations that hold for the given cell sets.
    pub fn mask_of(car1_cells: CellSet, car2_cells: CellSet) -> u64 {
        let mut mask = 0u64;
        for a in car1_cells.iter() {
            for b in car2_cells.iter() {
                mask |= 1 << GridConfig { car1: a, car2: b }.index();
            }
        }
        mask
    }
}

impl fmt::Display for GridConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b] = self.numbers();
        write!(f, "({a},{b})")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScenarioSpec {
    pub id: String,
    pub first: GridConfig,
    pub second: GridConfig,
}

impl ScenarioSpec {
    pub fn new(id: impl Into<String>, first: GridConfig, second: GridConfig) -> Self {
        Self { id: id.into(), first, second }
    }

    /// Canonical id `c<a1><a2>_<b1><b2>` used by the built-in catalogs.
    pub fn canonical_id(first: GridConfig, second: GridConfig) -> String {
        let [a1, a2] = first.numbers();
        let [b1, b2] = second.numbers();
        format!("c{a1}{a2}_{b1}{b2}")
    }

    pub fn canonical(first: GridConfig, second: GridConfig) -> Self {
        Self::new(Self::canonical_id(first, second), first, second)
    }

    /// Parses the inline form `a1,a2->b1,b2`, e.g. `2,2->6,4`.
    pub fn parse_inline(text: &str) -> Result<Self, CatalogError> {
        let bad = || CatalogError::InlineSpec(text.to_string());
        let (a, b) = text.split_once("->").ok_or_else(bad)?;
        let pair = |s: &str| -> Result<GridConfig, CatalogError> {
            let (x, y) = s.split_once(',').ok_or_else(bad)?;
            let x: u8 = x.trim().parse().map_err(|_| bad())?;
            let y: u8 = y.trim().parse().map_err(|_| bad())?;
            GridConfig::from_numbers(x, y).ok_or_else(bad)
        };
        Ok(Self::canonical(pair(a)?, pair(b)?))
    }

    pub fn objective(&self) -> ReachObjective {
        spec_to_objective(self)
    }
}

impl fmt::Display for ScenarioSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} -> {}", self.id, self.first, self.second)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("duplicate scenario id `{0}`")]
    DuplicateId(String),
    #[error("scenario `{id}` repeats the configuration pair of `{existing}`")]
    DuplicatePair { id: String, existing: String },
    #[error("inline scenario `{0}` is not of the form a1,a2->b1,b2 with cells 1..8")]
    InlineSpec(String),
    #[error("scenario `{0}` not found in catalog")]
    UnknownId(String),
    #[error("catalog JSON: {0}")]
    Json(String),
}

/// Ordered list of scenarios with unique ids and unique configuration pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScenarioCatalog {
    specs: Vec<ScenarioSpec>,
}

impl ScenarioCatalog {
    pub fn new(specs: Vec<ScenarioSpec>) -> Result<Self, CatalogError> {
        let mut ids = HashSet::new();
        let mut pairs = std::collections::HashMap::new();
        for s in &specs {
            if !ids.insert(s.id.as_str()) {
                return Err(CatalogError::DuplicateId(s.id.clone()));
            }
            if let Some(existing) = pairs.insert((s.first, s.second), s.id.as_str()) {
                return Err(CatalogError::DuplicatePair { id: s.id.clone(), existing: existing.to_string() });
            }
        }
        Ok(Self { specs })
    }

    pub fn specs(&self) -> &[ScenarioSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ScenarioSpec> {
        self.specs.iter().find(|s| s.id == id)
    }

    pub fn contains_pair(&self, first: GridConfig, second: GridConfig) -> bool {
        self.specs.iter().any(|s| s.first == first && s.second == second)
    }

    /// `[{"id":..,"first":[n,n],"second":[n,n]}, ...]`
    pub fn to_json(&self) -> String {
        let rows: Vec<CatalogJsonRow> = self
            .specs
            .iter()
            .map(|s| CatalogJsonRow { id: s.id.clone(), first: s.first.numbers(), second: s.second.numbers() })
            .collect();
        serde_json::to_string_pretty(&rows).expect("catalog rows serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        let rows: Vec<CatalogJsonRow> =
            serde_json::from_str(text).map_err(|e| CatalogError::Json(e.to_string()))?;
        let specs = rows
            .into_iter()
            .map(|r| {
                let cfg = |p: [u8; 2]| {
                    GridConfig::from_numbers(p[0], p[1])
                        .ok_or_else(|| CatalogError::Json(format!("cell out of range in `{}`", r.id)))
                };
                Ok(ScenarioSpec::new(r.id.clone(), cfg(r.first)?, cfg(r.second)?))
            })
            .collect::<Result<Vec<_>, CatalogError>>()?;
        Self::new(specs)
    }
}

#[derive(Serialize, Deserialize)]
struct CatalogJsonRow {
    id: String,
    first: [u8; 2],
    second: [u8; 2],
}

/// All 8^4 = 4096 scenarios in lexicographic order of (A1, A2, B1, B2).
pub fn enumerate_all() -> ScenarioCatalog {
    let mut specs = Vec::with_capacity(4096);
    for a in 0..64 {
        for b in 0..64 {
            specs.push(ScenarioSpec::canonical(GridConfig::from_index(a), GridConfig::from_index(b)));
        }
    }
    ScenarioCatalog { specs }
}

/// Start configurations of the default catalog, as (car1, car2) cell numbers.
///
/// Eight side/front pairings with car1 on the left half and car2 on the
/// right half of the grid (including cut-ins to the front-center cell), plus
/// four stacked configurations where both cars share one cell.
pub const DEFAULT_STARTS: [[u8; 2]; 12] = [
    [4, 5],
    [1, 3],
    [1, 5],
    [4, 3],
    [2, 3],
    [2, 5],
    [1, 2],
    [4, 2],
    [1, 1],
    [2, 2],
    [3, 3],
    [7, 7],
];

/// End configurations of the default catalog: falling back, swapping sides
/// and returning to the start layout.
pub const DEFAULT_ENDS: [[u8; 2]; 12] = [
    [6, 4],
    [4, 6],
    [6, 8],
    [8, 6],
    [4, 5],
    [5, 4],
    [2, 7],
    [7, 2],
    [1, 3],
    [3, 1],
    [6, 5],
    [4, 8],
];

/// The 144-scenario default coverage set: every start crossed with every
/// end, in start-major order. The same set ships as `catalog/default.scn`.
pub fn default_catalog() -> ScenarioCatalog {
    let mut specs = Vec::with_capacity(144);
    for [a1, a2] in DEFAULT_STARTS {
        for [b1, b2] in DEFAULT_ENDS {
            let first = GridConfig::from_numbers(a1, a2).expect("valid start cell");
            let second = GridConfig::from_numbers(b1, b2).expect("valid end cell");
            specs.push(ScenarioSpec::canonical(first, second));
        }
    }
    ScenarioCatalog::new(specs).expect("default catalog has unique entries")
}

/// Two-phase reachability goal: phase 1 at some step `i`, phase 2 at some
/// step `j > i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReachObjective {
    pub first: GridConfig,
    pub second: GridConfig,
}

pub fn spec_to_objective(spec: &ScenarioSpec) -> ReachObjective {
    ReachObjective { first: spec.first, second: spec.second }
}

impl ReachObjective {
    pub fn phase1_holds(&self, car1_cells: CellSet, car2_cells: CellSet) -> bool {
        self.first.holds(car1_cells, car2_cells)
    }

    pub fn phase2_holds(&self, car1_cells: CellSet, car2_cells: CellSet) -> bool {
        self.second.holds(car1_cells, car2_cells)
    }

    /// Earliest `(i, j)` with `i < j`, phase 1 at `i` and phase 2 at `j`.
    /// Taking the earliest phase-1 index never loses a witness.
    pub fn earliest_witness<I>(&self, observations: I) -> Option<(usize, usize)>
    where
        I: IntoIterator<Item = (CellSet, CellSet)>,
    {
        let mut phase1 = None;
        for (k, (c1, c2)) in observations.into_iter().enumerate() {
            match phase1 {
                Some(i) if self.phase2_holds(c1, c2) => return Some((i, k)),
                None if self.phase1_holds(c1, c2) => phase1 = Some(k),
                _ => {}
            }
        }
        None
    }

    /// Evaluates on a sequence of abstract states under `bounds`.
    pub fn satisfied_by(&self, states: &[WorldState], bounds: &GridBounds) -> Option<(usize, usize)> {
        self.earliest_witness(
            states
                .iter()
                .map(|w| (grid_cells(&w.ego, &w.car1, bounds), grid_cells(&w.ego, &w.car2, bounds))),
        )
    }
}
