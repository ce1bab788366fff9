//! The 3x3 grid centered on the ego. Cells are numbered
//!
//! ```text
//!   1 | 2 | 3     (ahead)
//!   4 | E | 5
//!   6 | 7 | 8     (behind)
//! left      right
//! ```
//!
//! A car may satisfy more than one cell predicate at once (the front and side
//! bands overlap), so classification returns a set.

use std::cmp::Ordering;
use std::fmt;

use num_traits::Signed;
use serde::{Deserialize, Serialize};

use crate::model::VehicleState;
use crate::rational::{self, q, to_f64, Q};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GridCell {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
    C8,
    #[serde(rename = "OUTSIDE")]
    Outside,
}

/// Lateral relation of a cell to the ego lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneSide {
    Left,
    Same,
    Right,
}

/// Longitudinal band of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    Ahead,
    Beside,
    Behind,
}

impl GridCell {
    pub const ALL: [GridCell; 8] = [
        GridCell::C1,
        GridCell::C2,
        GridCell::C3,
        GridCell::C4,
        GridCell::C5,
        GridCell::C6,
        GridCell::C7,
        GridCell::C8,
    ];

    /// Cell number 1..=8, or `None` for [`GridCell::Outside`].
    pub fn number(self) -> Option<u8> {
        match self {
            GridCell::Outside => None,
            c => Some(c as u8 + 1),
        }
    }

    pub fn from_number(n: u8) -> Option<GridCell> {
        (1..=8).contains(&n).then(|| GridCell::ALL[n as usize - 1])
    }

    pub fn side(self) -> Option<LaneSide> {
        use GridCell::*;
        Some(match self {
            C1 | C4 | C6 => LaneSide::Left,
            C2 | C7 => LaneSide::Same,
            C3 | C5 | C8 => LaneSide::Right,
            Outside => return None,
        })
    }

    pub fn band(self) -> Option<Band> {
        use GridCell::*;
        Some(match self {
            C1 | C2 | C3 => Band::Ahead,
            C4 | C5 => Band::Beside,
            C6 | C7 | C8 => Band::Behind,
            Outside => return None,
        })
    }

    /// Lane index a car must occupy to be in this cell.
    pub fn target_lane(self, ego_lane: u8) -> Option<u8> {
        Some(match self.side()? {
            LaneSide::Left => ego_lane.checked_sub(1)?,
            LaneSide::Same => ego_lane,
            LaneSide::Right => ego_lane + 1,
        })
    }

    fn bit(self) -> u8 {
        match self.number() {
            Some(n) => 1 << (n - 1),
            None => 0,
        }
    }
}

impl fmt::Display for GridCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.number() {
            Some(n) => write!(f, "C{n}"),
            None => f.write_str("OUTSIDE"),
        }
    }
}

/// Set of cells C1..C8 as a bitmask. The empty set means OUTSIDE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct CellSet(pub u8);

impl CellSet {
    pub const OUTSIDE: CellSet = CellSet(0);

    pub fn insert(&mut self, cell: GridCell) {
        self.0 |= cell.bit();
    }

    /// Membership test. `Outside` is contained exactly when the set is empty.
    pub fn contains(self, cell: GridCell) -> bool {
        match cell {
            GridCell::Outside => self.0 == 0,
            c => self.0 & c.bit() != 0,
        }
    }

    pub fn is_outside(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: CellSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = GridCell> {
        GridCell::ALL.into_iter().filter(move |c| self.contains(*c))
    }

    /// The cells as a list; `[Outside]` when no predicate holds.
    pub fn to_cells(self) -> Vec<GridCell> {
        if self.is_outside() {
            vec![GridCell::Outside]
        } else {
            self.iter().collect()
        }
    }
}

impl FromIterator<GridCell> for CellSet {
    fn from_iter<I: IntoIterator<Item = GridCell>>(iter: I) -> Self {
        let mut s = CellSet::default();
        for c in iter {
            s.insert(c);
        }
        s
    }
}

impl fmt::Display for CellSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cells: Vec<String> = self.to_cells().iter().map(|c| c.to_string()).collect();
        write!(f, "{{{}}}", cells.join(","))
    }
}

/// Distance bands of the grid: front/rear cells cover
/// `near_min <= |Δ| <= far_max`, side cells cover `|Δ| <= adjacent_max`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridBounds {
    #[serde(with = "rational::pq_string")]
    pub near_min: Q,
    #[serde(with = "rational::pq_string")]
    pub far_max: Q,
    #[serde(with = "rational::pq_string")]
    pub adjacent_max: Q,
}

impl GridBounds {
    /// Bounds used to evaluate simulated traces: (4, 24, 10).
    pub fn concrete() -> Self {
        Self { near_min: q(4), far_max: q(24), adjacent_max: q(10) }
    }

    /// Concrete bounds shrunk by 3 m in every direction: (7, 21, 7). Used
    /// when generating abstract witnesses.
    pub fn abstract_default() -> Self {
        Self { near_min: q(7), far_max: q(21), adjacent_max: q(7) }
    }

    pub fn is_valid(&self) -> bool {
        q(0) <= self.near_min && self.near_min < self.far_max && self.adjacent_max > q(0)
    }

    pub fn to_f64(&self) -> GridBoundsF64 {
        GridBoundsF64 {
            near_min: to_f64(&self.near_min),
            far_max: to_f64(&self.far_max),
            adjacent_max: to_f64(&self.adjacent_max),
        }
    }

    /// Closed interval of `car.pos - ego.pos` admitted by a cell's band.
    pub fn delta_range(&self, band: Band) -> (Q, Q) {
        match band {
            Band::Ahead => (self.near_min, self.far_max),
            Band::Beside => (-self.adjacent_max, self.adjacent_max),
            Band::Behind => (-self.far_max, -self.near_min),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridBoundsF64 {
    pub near_min: f64,
    pub far_max: f64,
    pub adjacent_max: f64,
}

/// Cell predicates for a car whose lane compares to the ego lane as
/// `lane_cmp` and whose longitudinal offset from the ego is `delta`.
pub fn classify<T>(lane_cmp: Ordering, delta: T, near_min: T, far_max: T, adjacent_max: T) -> CellSet
where
    T: Signed + PartialOrd + Copy,
{
    let dist = delta.abs();
    let ahead = delta > T::zero() && near_min <= dist && dist <= far_max;
    let behind = delta < T::zero() && near_min <= dist && dist <= far_max;
    let beside = dist <= adjacent_max;
    let mut set = CellSet::default();
    let (front, side, rear) = match lane_cmp {
        Ordering::Less => (GridCell::C1, Some(GridCell::C4), GridCell::C6),
        Ordering::Equal => (GridCell::C2, None, GridCell::C7),
        Ordering::Greater => (GridCell::C3, Some(GridCell::C5), GridCell::C8),
    };
    if ahead {
        set.insert(front);
    }
    if let (true, Some(cell)) = (beside, side) {
        set.insert(cell);
    }
    if behind {
        set.insert(rear);
    }
    set
}

/// Cells occupied by `car` relative to `ego` in the abstract model.
pub fn grid_cells(ego: &VehicleState, car: &VehicleState, bounds: &GridBounds) -> CellSet {
    classify(
        car.lane.cmp(&ego.lane),
        car.pos - ego.pos,
        bounds.near_min,
        bounds.far_max,
        bounds.adjacent_max,
    )
}

/// Cells for concrete (floating point) positions.
pub fn grid_cells_f64(ego_lane: u8, ego_x: f64, car_lane: u8, car_x: f64, bounds: &GridBoundsF64) -> CellSet {
    classify(car_lane.cmp(&ego_lane), car_x - ego_x, bounds.near_min, bounds.far_max, bounds.adjacent_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(pos: i64, lane: u8) -> VehicleState {
        VehicleState { pos: q(pos), lane, speed: q(0), steps_since_lane_change: 0 }
    }

    #[test]
    fn left_lane_overlap_band() {
        let set = grid_cells(&v(0, 1), &v(10, 0), &GridBounds::concrete());
        assert_eq!(set.to_cells(), vec![GridCell::C1, GridCell::C4]);
    }

    #[test]
    fn beyond_far_is_outside() {
        let set = grid_cells(&v(0, 1), &v(30, 1), &GridBounds::concrete());
        assert_eq!(set.to_cells(), vec![GridCell::Outside]);
        assert!(set.contains(GridCell::Outside));
    }

    #[test]
    fn right_lane_behind() {
        let set = grid_cells(&v(0, 1), &v(-10, 2), &GridBounds::concrete());
        assert!(set.contains(GridCell::C8));
        // The side band is symmetric, so 10 m behind is also beside.
        assert_eq!(set.to_cells(), vec![GridCell::C5, GridCell::C8]);
        let set = grid_cells(&v(0, 1), &v(-11, 2), &GridBounds::concrete());
        assert_eq!(set.to_cells(), vec![GridCell::C8]);
    }

    #[test]
    fn same_lane_too_close_is_outside() {
        let set = grid_cells(&v(0, 1), &v(3, 1), &GridBounds::concrete());
        assert!(set.is_outside());
    }

    #[test]
    fn bounds_are_inclusive() {
        let b = GridBounds::concrete();
        let ego = v(0, 1);
        assert_eq!(grid_cells(&ego, &v(4, 1), &b).to_cells(), vec![GridCell::C2]);
        assert_eq!(grid_cells(&ego, &v(24, 1), &b).to_cells(), vec![GridCell::C2]);
        assert_eq!(grid_cells(&ego, &v(-24, 1), &b).to_cells(), vec![GridCell::C7]);
        assert_eq!(grid_cells(&ego, &v(10, 2), &b).to_cells(), vec![GridCell::C3, GridCell::C5]);
        assert_eq!(grid_cells(&ego, &v(-10, 0), &b).to_cells(), vec![GridCell::C4, GridCell::C6]);
        assert_eq!(grid_cells(&ego, &v(11, 0), &b).to_cells(), vec![GridCell::C1]);
        assert!(grid_cells(&ego, &v(25, 0), &b).is_outside());
    }

    #[test]
    fn initial_layout_is_side_by_side() {
        let b = GridBounds::abstract_default();
        assert_eq!(grid_cells(&v(0, 1), &v(0, 0), &b).to_cells(), vec![GridCell::C4]);
        assert_eq!(grid_cells(&v(0, 1), &v(0, 2), &b).to_cells(), vec![GridCell::C5]);
    }

    #[test]
    fn cell_numbering_roundtrip() {
        for n in 1..=8 {
            assert_eq!(GridCell::from_number(n).unwrap().number(), Some(n));
        }
        assert_eq!(GridCell::from_number(0), None);
        assert_eq!(GridCell::from_number(9), None);
        assert_eq!(GridCell::C2.target_lane(1), Some(1));
        assert_eq!(GridCell::C6.target_lane(1), Some(0));
        assert_eq!(GridCell::C5.target_lane(1), Some(2));
    }

    proptest! {
        #[test]
        fn abstract_cells_refine_concrete_cells(lane in 0u8..3, num in -4000i64..4000) {
            let ego = v(0, 1);
            let car = VehicleState { pos: Q::new(num, 100), lane, speed: q(0), steps_since_lane_change: 0 };
            let a = grid_cells(&ego, &car, &GridBounds::abstract_default());
            let c = grid_cells(&ego, &car, &GridBounds::concrete());
            prop_assert!(a.is_subset(c), "{} not within {}", a, c);
        }

        #[test]
        fn f64_and_rational_agree_on_grid_values(lane in 0u8..3, num in -400i64..400) {
            let ego = v(0, 1);
            let car = VehicleState { pos: Q::new(num, 10), lane, speed: q(0), steps_since_lane_change: 0 };
            let exact = grid_cells(&ego, &car, &GridBounds::concrete());
            let approx = grid_cells_f64(1, 0.0, lane, num as f64 / 10.0, &GridBounds::concrete().to_f64());
            prop_assert_eq!(exact, approx);
        }
    }
}
