//! Discrete grid environment, robot and human mobility, and the simulation clock.
//!
//! Cells are addressed as `(x, y)` with `x` growing east and `y` growing
//! south, so row `y` of a text map is the `y`-th line after the header.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A grid cell `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, other: Cell) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    pub fn is_adjacent_or_same(self, other: Cell) -> bool {
        self.manhattan(other) <= 1
    }

    /// The four neighbours in N, E, S, W order (unclipped).
    pub fn four_neighbors(self) -> [Cell; 4] {
        [
            Cell::new(self.x, self.y - 1),
            Cell::new(self.x + 1, self.y),
            Cell::new(self.x, self.y + 1),
            Cell::new(self.x - 1, self.y),
        ]
    }
}

impl From<(i32, i32)> for Cell {
    fn from((x, y): (i32, i32)) -> Self {
        Cell::new(x, y)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("cell {0} is outside the {1}x{2} grid")]
    OutOfBounds(Cell, u32, u32),
    #[error("cell {0} is blocked")]
    Blocked(Cell),
    #[error("invalid world parameter: {0}")]
    InvalidParameter(String),
    #[error("map line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("human track: {0}")]
    InvalidTrack(String),
}

pub const DEFAULT_CELL_SIZE_M: f64 = 2.0;
pub const DEFAULT_FRAME_PERIOD_S: f64 = 0.5;
pub const DEFAULT_CELL_TRAVERSE_S: f64 = 1.4;

/// Traversability grid plus timing constants.
#[derive(Clone, Debug, PartialEq)]
pub struct GridWorld {
    width: u32,
    height: u32,
    cell_size_m: f64,
    blocked: BTreeSet<Cell>,
    frame_period_s: f64,
    cell_traverse_s: f64,
}

impl GridWorld {
    /// All-free grid with default timing constants.
    pub fn open(width: u32, height: u32) -> Result<Self, WorldError> {
        Self::new(width, height, DEFAULT_CELL_SIZE_M, BTreeSet::new(), DEFAULT_FRAME_PERIOD_S, DEFAULT_CELL_TRAVERSE_S)
    }

    pub fn new(
        width: u32,
        height: u32,
        cell_size_m: f64,
        blocked: BTreeSet<Cell>,
        frame_period_s: f64,
        cell_traverse_s: f64,
    ) -> Result<Self, WorldError> {
        if width == 0 || height == 0 {
            return Err(WorldError::InvalidParameter(format!("grid must be at least 1x1, got {width}x{height}")));
        }
        for (name, v) in
            [("cell_size_m", cell_size_m), ("frame_period_s", frame_period_s), ("cell_traverse_s", cell_traverse_s)]
        {
            if !(v.is_finite() && v > 0.0) {
                return Err(WorldError::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        let world = Self { width, height, cell_size_m, blocked: BTreeSet::new(), frame_period_s, cell_traverse_s };
        for c in &blocked {
            world.check_in_bounds(*c)?;
        }
        Ok(Self { blocked, ..world })
    }

    pub fn with_blocked(mut self, cells: impl IntoIterator<Item = Cell>) -> Result<Self, WorldError> {
        for c in cells {
            self.check_in_bounds(c)?;
            self.blocked.insert(c);
        }
        Ok(self)
    }

    pub fn with_timing(mut self, frame_period_s: f64, cell_traverse_s: f64) -> Result<Self, WorldError> {
        let checked =
            Self::new(self.width, self.height, self.cell_size_m, BTreeSet::new(), frame_period_s, cell_traverse_s)?;
        self.frame_period_s = checked.frame_period_s;
        self.cell_traverse_s = checked.cell_traverse_s;
        Ok(self)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn cell_size_m(&self) -> f64 {
        self.cell_size_m
    }

    pub fn frame_period_s(&self) -> f64 {
        self.frame_period_s
    }

    pub fn blocked(&self) -> &BTreeSet<Cell> {
        &self.blocked
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as u32) < self.width && (c.y as u32) < self.height
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.in_bounds(c) && !self.blocked.contains(&c)
    }

    pub fn check_in_bounds(&self, c: Cell) -> Result<(), WorldError> {
        if self.in_bounds(c) {
            Ok(())
        } else {
            Err(WorldError::OutOfBounds(c, self.width, self.height))
        }
    }

    pub fn check_free(&self, c: Cell) -> Result<(), WorldError> {
        self.check_in_bounds(c)?;
        if self.blocked.contains(&c) {
            return Err(WorldError::Blocked(c));
        }
        Ok(())
    }

    /// Free 4-neighbours of `cell` in N, E, S, W order, followed by `cell`
    /// itself (the wait action).
    pub fn neighbors(&self, cell: Cell) -> Result<Vec<Cell>, WorldError> {
        self.check_in_bounds(cell)?;
        let mut out: Vec<Cell> = cell.four_neighbors().into_iter().filter(|c| self.is_free(*c)).collect();
        out.push(cell);
        Ok(out)
    }

    /// Time to traverse one grid cell; this is also the deadline of one
    /// sensing-to-command loop.
    pub fn cell_transition_time(&self) -> f64 {
        self.cell_traverse_s
    }

    /// Iterator over all free cells in row-major order.
    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height as i32)
            .flat_map(move |y| (0..self.width as i32).map(move |x| Cell::new(x, y)))
            .filter(|c| !self.blocked.contains(c))
    }

    pub fn cell_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Row-major dense index of an in-bounds cell.
    pub fn index(&self, c: Cell) -> usize {
        c.y as usize * self.width as usize + c.x as usize
    }

    /// Serialise to the plain-text map format.
    pub fn to_map_string(&self) -> String {
        let mut s = format!("{} {} {}\n", self.width, self.height, self.cell_size_m);
        for y in 0..self.height as i32 {
            for x in 0..self.width as i32 {
                s.push(if self.blocked.contains(&Cell::new(x, y)) { '#' } else { '.' });
            }
            s.push('\n');
        }
        s
    }
}

/// Parses the plain-text map format: a header `width height cell_size_m`
/// followed by `height` rows of `.` (free) and `#` (blocked).
impl FromStr for GridWorld {
    type Err = WorldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut lines = s.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or(WorldError::Parse { line: 1, msg: "empty map".into() })?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(WorldError::Parse {
                line: hline + 1,
                msg: format!("expected 'width height cell_size_m', got '{header}'"),
            });
        }
        let perr = |msg: String| WorldError::Parse { line: hline + 1, msg };
        let width: u32 = parts[0].parse().map_err(|e| perr(format!("width: {e}")))?;
        let height: u32 = parts[1].parse().map_err(|e| perr(format!("height: {e}")))?;
        let cell_size: f64 = parts[2].parse().map_err(|e| perr(format!("cell_size_m: {e}")))?;

        let mut blocked = BTreeSet::new();
        let mut rows = 0u32;
        for (lineno, row) in lines {
            let row = row.trim_end();
            if rows >= height {
                return Err(WorldError::Parse { line: lineno + 1, msg: format!("more than {height} rows") });
            }
            if row.chars().count() != width as usize {
                return Err(WorldError::Parse {
                    line: lineno + 1,
                    msg: format!("row has {} cells, expected {width}", row.chars().count()),
                });
            }
            for (x, ch) in row.chars().enumerate() {
                match ch {
                    '.' => {}
                    '#' => {
                        blocked.insert(Cell::new(x as i32, rows as i32));
                    }
                    other => {
                        return Err(WorldError::Parse {
                            line: lineno + 1,
                            msg: format!("unexpected character '{other}'"),
                        })
                    }
                }
            }
            rows += 1;
        }
        if rows != height {
            return Err(WorldError::Parse {
                line: hline + 1,
                msg: format!("header declares {height} rows, found {rows}"),
            });
        }
        GridWorld::new(width, height, cell_size, blocked, DEFAULT_FRAME_PERIOD_S, DEFAULT_CELL_TRAVERSE_S)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionStatus {
    Moving,
    Waiting,
    Arrived,
    Stopped,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobotState {
    pub id: u32,
    pub cell: Cell,
    pub goal: Cell,
    pub status: MotionStatus,
}

impl RobotState {
    pub fn new(id: u32, cell: Cell, goal: Cell) -> Self {
        let status = if cell == goal { MotionStatus::Arrived } else { MotionStatus::Moving };
        Self { id, cell, goal, status }
    }

    pub fn validate(&self, world: &GridWorld) -> Result<(), WorldError> {
        world.check_free(self.cell)?;
        world.check_free(self.goal)
    }
}

pub const DEFAULT_HORIZON_FRAMES: u32 = 3;

/// Scripted human trajectory, one waypoint per step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanTrack {
    waypoints: Vec<Cell>,
    horizon_frames: u32,
}

impl HumanTrack {
    pub fn new(waypoints: Vec<Cell>, horizon_frames: u32) -> Result<Self, WorldError> {
        if waypoints.is_empty() {
            return Err(WorldError::InvalidTrack("no waypoints".into()));
        }
        if horizon_frames == 0 {
            return Err(WorldError::InvalidTrack("horizon_frames must be >= 1".into()));
        }
        if let Some(w) = waypoints.windows(2).find(|w| !w[0].is_adjacent_or_same(w[1])) {
            return Err(WorldError::InvalidTrack(format!("waypoints {} and {} are not 4-adjacent", w[0], w[1])));
        }
        Ok(Self { waypoints, horizon_frames })
    }

    pub fn stationary(cell: Cell, horizon_frames: u32) -> Result<Self, WorldError> {
        Self::new(vec![cell], horizon_frames)
    }

    pub fn waypoints(&self) -> &[Cell] {
        &self.waypoints
    }

    pub fn horizon_frames(&self) -> u32 {
        self.horizon_frames
    }

    /// Position at `step`; past the end of the track the last cell is held.
    pub fn position(&self, step: u32) -> Cell {
        let i = (step as usize).min(self.waypoints.len() - 1);
        self.waypoints[i]
    }

    /// Delays the track start by `steps`, holding the first cell meanwhile.
    pub fn delayed(&self, steps: u32) -> Self {
        let mut waypoints = vec![self.waypoints[0]; steps as usize];
        waypoints.extend_from_slice(&self.waypoints);
        Self { waypoints, horizon_frames: self.horizon_frames }
    }
}

/// Occupied `(cell, step)` pairs over the next `horizon_frames` steps after
/// `step`. Past the end of the track the human is extrapolated as stationary.
pub fn human_forecast(track: &HumanTrack, step: u32) -> Vec<(Cell, u32)> {
    (1..=track.horizon_frames).map(|k| (track.position(step + k), step + k)).collect()
}

/// Forecast with per-entry cell-error injection: with probability
/// `error_prob` an entry is displaced to a uniformly chosen 4-neighbour.
pub fn human_forecast_noisy<R: Rng + ?Sized>(
    track: &HumanTrack,
    step: u32,
    error_prob: f64,
    rng: &mut R,
) -> Vec<(Cell, u32)> {
    human_forecast(track, step)
        .into_iter()
        .map(|(c, t)| {
            if error_prob > 0.0 && rng.random::<f64>() < error_prob {
                let k = rng.random_range(0..4);
                (c.four_neighbors()[k], t)
            } else {
                (c, t)
            }
        })
        .collect()
}

/// Global simulation clock.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Clock {
    step: u64,
    period_s: f64,
}

impl Clock {
    pub fn new(period_s: f64) -> Self {
        Self { step: 0, period_s }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn sim_time_s(&self) -> f64 {
        self.step as f64 * self.period_s
    }

    pub fn advance(&mut self) {
        self.step += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(x: i32, y: i32) -> Cell {
        Cell::new(x, y)
    }

    #[test]
    fn interior_cell_has_full_neighbourhood() {
        let w = GridWorld::open(5, 5).unwrap();
        assert_eq!(w.neighbors(c(2, 2)).unwrap(), vec![c(2, 1), c(3, 2), c(2, 3), c(1, 2), c(2, 2)]);
    }

    #[test]
    fn corner_cell_is_clipped() {
        let w = GridWorld::open(5, 5).unwrap();
        let n: BTreeSet<_> = w.neighbors(c(0, 0)).unwrap().into_iter().collect();
        assert_eq!(n, [c(0, 1), c(1, 0), c(0, 0)].into_iter().collect());
    }

    #[test]
    fn enclosed_cell_can_only_wait() {
        let w = GridWorld::open(3, 3).unwrap().with_blocked([c(1, 0), c(0, 1), c(2, 1), c(1, 2)]).unwrap();
        assert_eq!(w.neighbors(c(1, 1)).unwrap(), vec![c(1, 1)]);
    }

    #[test]
    fn out_of_bounds_neighbors_is_an_error() {
        let w = GridWorld::open(3, 3).unwrap();
        assert!(matches!(w.neighbors(c(3, 0)), Err(WorldError::OutOfBounds(..))));
        assert!(matches!(w.neighbors(c(-1, 0)), Err(WorldError::OutOfBounds(..))));
    }

    #[test]
    fn transition_time_is_a_constant() {
        let w = GridWorld::open(2, 2).unwrap();
        assert_eq!(w.cell_transition_time(), 1.4);
        let w = w.with_timing(0.5, 1.5).unwrap();
        assert_eq!(w.cell_transition_time(), 1.5);
        // Pure kinematics would give 2.0 m / 1.5 m/s; the world does not derive it.
        assert!((w.cell_size_m() / 1.5 - 1.3333).abs() < 1e-3);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(GridWorld::open(0, 3).is_err());
        assert!(GridWorld::open(3, 3).unwrap().with_timing(0.0, 1.4).is_err());
        assert!(GridWorld::open(3, 3).unwrap().with_blocked([c(5, 5)]).is_err());
    }

    #[test]
    fn map_text_round_trip() {
        let text = "4 3 2\n..#.\n....\n#...\n";
        let w: GridWorld = text.parse().unwrap();
        assert_eq!(w.width(), 4);
        assert_eq!(w.height(), 3);
        assert!(!w.is_free(c(2, 0)));
        assert!(!w.is_free(c(0, 2)));
        assert_eq!(w.to_map_string(), text);
    }

    #[test]
    fn map_parse_errors_name_the_line() {
        let err = "3 2 2\n...\n.x.\n".parse::<GridWorld>().unwrap_err();
        assert_eq!(err, WorldError::Parse { line: 3, msg: "unexpected character 'x'".into() });
        assert!(matches!("3 3 2\n...\n".parse::<GridWorld>(), Err(WorldError::Parse { .. })));
    }

    #[test]
    fn stationary_forecast() {
        let t = HumanTrack::stationary(c(1, 1), 3).unwrap();
        assert_eq!(human_forecast(&t, 4), vec![(c(1, 1), 5), (c(1, 1), 6), (c(1, 1), 7)]);
    }

    #[test]
    fn moving_forecast() {
        let t = HumanTrack::new(vec![c(2, 2), c(3, 2), c(4, 2), c(5, 2)], 2).unwrap();
        assert_eq!(human_forecast(&t, 0), vec![(c(3, 2), 1), (c(4, 2), 2)]);
    }

    #[test]
    fn forecast_past_track_end_holds_last_cell() {
        let t = HumanTrack::new(vec![c(0, 0), c(1, 0)], 3).unwrap();
        assert_eq!(human_forecast(&t, 10), vec![(c(1, 0), 11), (c(1, 0), 12), (c(1, 0), 13)]);
    }

    #[test]
    fn track_rejects_jumps() {
        assert!(HumanTrack::new(vec![c(0, 0), c(2, 0)], 3).is_err());
        assert!(HumanTrack::new(vec![c(0, 0)], 0).is_err());
    }

    #[test]
    fn clock_time_tracks_steps() {
        let mut clk = Clock::new(0.5);
        for _ in 0..7 {
            clk.advance();
        }
        assert_eq!(clk.step(), 7);
        assert_eq!(clk.sim_time_s(), 3.5);
    }

    proptest! {
        #[test]
        fn neighbors_are_free_or_self(
            w in 1u32..8, h in 1u32..8,
            blocked in proptest::collection::vec((0i32..8, 0i32..8), 0..20),
            x in 0i32..8, y in 0i32..8,
        ) {
            let blocked: Vec<Cell> = blocked.into_iter()
                .map(Cell::from)
                .filter(|c| c.x < w as i32 && c.y < h as i32)
                .collect();
            let world = GridWorld::open(w, h).unwrap().with_blocked(blocked).unwrap();
            let cell = Cell::new(x % w as i32, y % h as i32);
            for n in world.neighbors(cell).unwrap() {
                prop_assert!(n == cell || (world.is_free(n) && n.manhattan(cell) == 1));
            }
        }

        #[test]
        fn forecast_length_equals_horizon(step in 0u32..50, horizon in 1u32..6, len in 1usize..10) {
            let waypoints: Vec<Cell> = (0..len as i32).map(|x| Cell::new(x, 0)).collect();
            let t = HumanTrack::new(waypoints, horizon).unwrap();
            prop_assert_eq!(human_forecast(&t, step).len(), horizon as usize);
        }

        #[test]
        fn clock_invariant(n in 0u64..1000, period in 0.01f64..2.0) {
            let mut clk = Clock::new(period);
            for _ in 0..n { clk.advance(); }
            prop_assert_eq!(clk.sim_time_s(), n as f64 * period);
        }
    }
}
