//! Prioritized conflict-based multi-robot planning on the grid.
//!
//! The low-level planner is a space-time A* over `(cell, step)` with wait
//! actions. The high level resolves robot-robot conflicts by constraining
//! only the lower-priority robot of each conflicting pair.

mod cbs;
mod search;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{Cell, GridWorld, WorldError};

pub use cbs::{
    detect_first_conflict, detect_first_conflict_with_gap, plan, plan_with, priority_order, Conflict, ConflictKind,
};
pub use search::{low_level_search, ConstraintTable};

/// Open-ended upper bound for [`ConstraintKind::Window`].
pub const FOREVER: u32 = u32::MAX;

/// Time-indexed cell sequence of one robot; `cells[t]` is the cell occupied
/// at step `t` and the last entry is the goal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceTimePath {
    pub robot_id: u32,
    pub cells: Vec<Cell>,
}

impl SpaceTimePath {
    pub fn new(robot_id: u32, cells: Vec<Cell>) -> Self {
        assert!(!cells.is_empty(), "a path has at least its start cell");
        Self { robot_id, cells }
    }

    pub fn arrival_step(&self) -> u32 {
        (self.cells.len() - 1) as u32
    }

    pub fn start(&self) -> Cell {
        self.cells[0]
    }

    pub fn goal(&self) -> Cell {
        *self.cells.last().expect("non-empty")
    }

    /// Cell at step `t`; after arrival the robot stays parked on its goal.
    pub fn at(&self, t: u32) -> Cell {
        let i = (t as usize).min(self.cells.len() - 1);
        self.cells[i]
    }

    /// Checks adjacency and map feasibility of every step.
    pub fn validate(&self, world: &GridWorld) -> Result<(), WorldError> {
        for c in &self.cells {
            world.check_free(*c)?;
        }
        if let Some(w) = self.cells.windows(2).find(|w| !w[0].is_adjacent_or_same(w[1])) {
            return Err(WorldError::InvalidParameter(format!(
                "robot {} jumps from {} to {}",
                self.robot_id, w[0], w[1]
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ConstraintKind {
    /// The robot may not occupy `cell` at `step`.
    Vertex { cell: Cell, step: u32 },
    /// The robot may not move `from -> to` between `step` and `step + 1`.
    Edge { from: Cell, to: Cell, step: u32 },
    /// The robot may not occupy `cell` at any step in `[step_lo, step_hi]`.
    /// `step_hi == FOREVER` means the cell stays forbidden.
    Window { cell: Cell, step_lo: u32, step_hi: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Constraint {
    pub robot_id: u32,
    pub kind: ConstraintKind,
}

impl Constraint {
    pub fn vertex(robot_id: u32, cell: Cell, step: u32) -> Self {
        Self { robot_id, kind: ConstraintKind::Vertex { cell, step } }
    }

    pub fn edge(robot_id: u32, from: Cell, to: Cell, step: u32) -> Self {
        Self { robot_id, kind: ConstraintKind::Edge { from, to, step } }
    }

    /// Window constraint; panics if `step_lo > step_hi`.
    pub fn window(robot_id: u32, cell: Cell, step_lo: u32, step_hi: u32) -> Self {
        assert!(step_lo <= step_hi, "window [{step_lo}, {step_hi}] is empty");
        Self { robot_id, kind: ConstraintKind::Window { cell, step_lo, step_hi } }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ConstraintKind::Vertex { cell, step } => write!(f, "r{}: not {cell}@{step}", self.robot_id),
            ConstraintKind::Edge { from, to, step } => {
                write!(f, "r{}: not {from}->{to}@{step}", self.robot_id)
            }
            ConstraintKind::Window { cell, step_lo, step_hi } if step_hi == FOREVER => {
                write!(f, "r{}: not {cell}@[{step_lo},inf)", self.robot_id)
            }
            ConstraintKind::Window { cell, step_lo, step_hi } => {
                write!(f, "r{}: not {cell}@[{step_lo},{step_hi}]", self.robot_id)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    Makespan,
    SafetyFirst,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Makespan => "makespan",
            Objective::SafetyFirst => "safety_first",
        }
    }
}

/// Path-planning knobs set by the orchestrator.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub objective: Objective,
    pub priority_robot: Option<u32>,
    pub min_time_gap_at_conflict: u32,
}

/// Tuning that is not exposed as an orchestrator knob.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlannerOptions {
    /// Search horizon in steps; `None` means `4 * (width + height)`.
    pub horizon: Option<u32>,
    /// Temporal half-width of the window placed on a forecast human cell
    /// under `safety_first`.
    pub safety_window: u32,
    /// Manhattan radius around a forecast human cell that is also forbidden
    /// at the forecast step under `safety_first`.
    pub safety_radius: u32,
    /// Largest robot count for which the makespan objective searches all
    /// priority orderings.
    pub max_permutation_robots: usize,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        Self { horizon: None, safety_window: 1, safety_radius: 1, max_permutation_robots: 4 }
    }
}

impl PlannerOptions {
    pub fn horizon_for(&self, world: &GridWorld) -> u32 {
        self.horizon.unwrap_or(4 * (world.width() + world.height()))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("robot {robot_id} has no path within the horizon under {} constraint(s)", constraints.len())]
    Infeasible { robot_id: u32, constraints: Vec<Constraint> },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("invalid planning request: {0}")]
    InvalidRequest(String),
}

/// Maximum arrival step over all paths.
pub fn makespan(paths: &[SpaceTimePath]) -> u32 {
    paths.iter().map(SpaceTimePath::arrival_step).max().unwrap_or(0)
}

pub fn sum_of_costs(paths: &[SpaceTimePath]) -> u32 {
    paths.iter().map(SpaceTimePath::arrival_step).sum()
}
