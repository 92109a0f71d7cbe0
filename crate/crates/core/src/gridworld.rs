//! Discrete state space, action set and the continuous/discrete state mapping.
//!
//! States are cells of a rectangular grid, numbered row-major from the
//! origin cell: `id = row * width + col`. Row indices grow along +y, so the
//! `North` action moves to `row + 1`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Mat2, Vec2};

pub type StateId = usize;

/// One of the eight compass moves or the idle action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    North,
    NorthEast,
    East,
    SouthEast,
    South,
    SouthWest,
    West,
    NorthWest,
    Idle,
}

impl Action {
    pub const ALL: [Action; 9] = [
        Action::North,
        Action::NorthEast,
        Action::East,
        Action::SouthEast,
        Action::South,
        Action::SouthWest,
        Action::West,
        Action::NorthWest,
        Action::Idle,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Action> {
        Action::ALL.get(id as usize).copied()
    }

    /// Grid offset `(dcol, drow)` of the intended successor.
    pub fn offset(self) -> (i64, i64) {
        match self {
            Action::North => (0, 1),
            Action::NorthEast => (1, 1),
            Action::East => (1, 0),
            Action::SouthEast => (1, -1),
            Action::South => (0, -1),
            Action::SouthWest => (-1, -1),
            Action::West => (-1, 0),
            Action::NorthWest => (-1, 1),
            Action::Idle => (0, 0),
        }
    }

    /// Unit heading; exactly zero for `Idle`.
    pub fn unit_direction(self) -> Vec2 {
        let (dx, dy) = self.offset();
        if dx != 0 && dy != 0 {
            Vec2::new(dx as f64, dy as f64) * std::f64::consts::FRAC_1_SQRT_2
        } else {
            Vec2::new(dx as f64, dy as f64)
        }
    }

    /// Commanded velocity at the given speed (m/s).
    pub fn velocity(self, speed: f64) -> Vec2 {
        self.unit_direction() * speed
    }

    pub fn opposite(self) -> Action {
        match self {
            Action::Idle => Action::Idle,
            a => Action::ALL[(a.id() as usize + 4) % 8],
        }
    }

    pub fn is_idle(self) -> bool {
        self == Action::Idle
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Action::North => "N",
            Action::NorthEast => "NE",
            Action::East => "E",
            Action::SouthEast => "SE",
            Action::South => "S",
            Action::SouthWest => "SW",
            Action::West => "W",
            Action::NorthWest => "NW",
            Action::Idle => "idle",
        };
        f.write_str(s)
    }
}

/// A set of actions stored as a bitmask. Used for tied optimal actions.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ActionSet(u16);

impl ActionSet {
    pub const EMPTY: ActionSet = ActionSet(0);

    pub fn single(a: Action) -> Self {
        ActionSet(1 << a.id())
    }

    pub fn insert(&mut self, a: Action) {
        self.0 |= 1 << a.id();
    }

    pub fn contains(self, a: Action) -> bool {
        self.0 & (1 << a.id()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Actions in id order.
    pub fn iter(self) -> impl Iterator<Item = Action> {
        Action::ALL.into_iter().filter(move |a| self.contains(*a))
    }

    pub fn first(self) -> Option<Action> {
        self.iter().next()
    }

    pub fn ids(self) -> Vec<u8> {
        self.iter().map(Action::id).collect()
    }
}

impl FromIterator<Action> for ActionSet {
    fn from_iter<I: IntoIterator<Item = Action>>(iter: I) -> Self {
        let mut set = ActionSet::EMPTY;
        for a in iter {
            set.insert(a);
        }
        set
    }
}

impl fmt::Debug for ActionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Rectangular grid world with a continuous embedding.
#[derive(Clone, Debug)]
pub struct GridWorld {
    width: usize,
    height: usize,
    cell_size: f64,
    origin: Vec2,
    goal: StateId,
    blocked: Vec<bool>,
    adjacency: Vec<Vec<(Action, StateId)>>,
}

impl GridWorld {
    pub fn new(
        width: usize,
        height: usize,
        cell_size: f64,
        origin: Vec2,
        goal: StateId,
    ) -> Result<Self> {
        Self::with_blocked(width, height, cell_size, origin, goal, &[])
    }

    /// Grid with the default origin, which puts cell (0, 0)'s center at
    /// `(cell_size / 2, cell_size / 2)` so the arena starts at (0, 0).
    pub fn square(side: usize, cell_size: f64, goal: StateId) -> Result<Self> {
        Self::new(side, side, cell_size, Vec2::repeat(cell_size / 2.0), goal)
    }

    pub fn with_blocked(
        width: usize,
        height: usize,
        cell_size: f64,
        origin: Vec2,
        goal: StateId,
        blocked: &[StateId],
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidGrid(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "cell size must be positive, got {cell_size}"
            )));
        }
        if !(origin.x.is_finite() && origin.y.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        let cells = width * height;
        let mut mask = vec![false; cells];
        for &b in blocked {
            if b >= cells {
                return Err(Error::InvalidGrid(format!(
                    "blocked cell {b} is outside the grid"
                )));
            }
            mask[b] = true;
        }
        if goal >= cells {
            return Err(Error::InvalidGrid(format!(
                "goal {goal} is outside the grid"
            )));
        }
        if mask[goal] {
            return Err(Error::InvalidGrid(format!("goal {goal} is blocked")));
        }
        let mut grid = GridWorld {
            width,
            height,
            cell_size,
            origin,
            goal,
            blocked: mask,
            adjacency: Vec::new(),
        };
        grid.adjacency = (0..cells).map(|s| grid.compute_neighbors(s)).collect();
        Ok(grid)
    }

    fn compute_neighbors(&self, s: StateId) -> Vec<(Action, StateId)> {
        if self.blocked[s] {
            return Vec::new();
        }
        let (col, row) = self.coords(s);
        Action::ALL
            .iter()
            .filter_map(|&a| {
                let (dc, dr) = a.offset();
                let target = self.state_at(col as i64 + dc, row as i64 + dr)?;
                (!self.blocked[target]).then_some((a, target))
            })
            .collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn goal(&self) -> StateId {
        self.goal
    }

    /// Number of cells, blocked or not. State ids range over `0..num_cells()`.
    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    /// |S|: cells that are not blocked.
    pub fn num_states(&self) -> usize {
        self.blocked.iter().filter(|b| !**b).count()
    }

    pub fn is_blocked(&self, s: StateId) -> bool {
        self.blocked.get(s).copied().unwrap_or(true)
    }

    pub fn is_valid(&self, s: StateId) -> bool {
        s < self.num_cells() && !self.blocked[s]
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> + '_ {
        (0..self.num_cells()).filter(|&s| !self.blocked[s])
    }

    pub fn blocked_cells(&self) -> Vec<StateId> {
        (0..self.num_cells()).filter(|&s| self.blocked[s]).collect()
    }

    fn check(&self, s: StateId) -> Result<()> {
        if self.is_valid(s) {
            Ok(())
        } else {
            Err(Error::InvalidState(s))
        }
    }

    /// `(col, row)` of a cell. Does not validate.
    pub fn coords(&self, s: StateId) -> (usize, usize) {
        (s % self.width, s / self.width)
    }

    pub fn state_at(&self, col: i64, row: i64) -> Option<StateId> {
        if col < 0 || row < 0 || col >= self.width as i64 || row >= self.height as i64 {
            return None;
        }
        Some(row as usize * self.width + col as usize)
    }

    /// Continuous coordinate of the cell center, `x(s)`.
    pub fn state_center(&self, s: StateId) -> Result<Vec2> {
        self.check(s)?;
        Ok(self.center_unchecked(s))
    }

    pub(crate) fn center_unchecked(&self, s: StateId) -> Vec2 {
        let (col, row) = self.coords(s);
        self.origin + Vec2::new(col as f64, row as f64) * self.cell_size
    }

    /// Nearest cell center to `x`. Positions outside the arena clamp to the
    /// nearest boundary cell; exact ties go to the smaller state id.
    pub fn locate(&self, x: Vec2) -> StateId {
        let col = Self::nearest_index((x.x - self.origin.x) / self.cell_size, self.width);
        let row = Self::nearest_index((x.y - self.origin.y) / self.cell_size, self.height);
        let s = row * self.width + col;
        if !self.blocked[s] {
            return s;
        }
        // Nearest unblocked center by brute force; id order breaks ties.
        let mut best = (f64::INFINITY, s);
        for cand in self.states() {
            let d = (self.center_unchecked(cand) - x).norm_squared();
            if d < best.0 {
                best = (d, cand);
            }
        }
        best.1
    }

    fn nearest_index(frac: f64, n: usize) -> usize {
        if frac.is_nan() {
            return 0;
        }
        // ceil(v - 0.5) rounds half-way values down.
        let i = (frac - 0.5).ceil();
        i.clamp(0.0, (n - 1) as f64) as usize
    }

    /// Admissible `(action, intended successor)` pairs; idle maps to `s`.
    pub fn neighbors(&self, s: StateId) -> Result<&[(Action, StateId)]> {
        self.check(s)?;
        Ok(&self.adjacency[s])
    }

    pub(crate) fn neighbors_unchecked(&self, s: StateId) -> &[(Action, StateId)] {
        &self.adjacency[s]
    }

    pub fn is_neighbor(&self, s: StateId, target: StateId) -> bool {
        self.adjacency
            .get(s)
            .map(|n| n.iter().any(|&(_, t)| t == target))
            .unwrap_or(false)
    }

    /// Position in the arena (the union of all cells, blocked or not).
    pub fn bounds(&self) -> (Vec2, Vec2) {
        let half = Vec2::repeat(self.cell_size / 2.0);
        let far = Vec2::new((self.width - 1) as f64, (self.height - 1) as f64) * self.cell_size;
        (self.origin - half, self.origin + far + half)
    }

    pub fn clamp(&self, x: Vec2) -> Vec2 {
        let (lo, hi) = self.bounds();
        Vec2::new(x.x.clamp(lo.x, hi.x), x.y.clamp(lo.y, hi.y))
    }

    /// Isotropic covariance `(k * cell_size)^2 I`.
    pub fn isotropic_cov(&self, k: f64) -> Mat2 {
        Mat2::identity() * (k * self.cell_size).powi(2)
    }
}
