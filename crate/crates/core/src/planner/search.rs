use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};

use super::{Constraint, ConstraintKind, PlanError, SpaceTimePath, FOREVER};
use crate::world::{Cell, GridWorld, RobotState};

/// Per-robot constraint lookup used by the space-time search.
#[derive(Clone, Debug, Default)]
pub struct ConstraintTable {
    vertex: HashMap<Cell, Vec<(u32, u32)>>,
    edges: HashSet<(Cell, Cell, u32)>,
    /// Largest step at which any finite constraint changes; after it the
    /// problem is time-invariant.
    horizon_of_change: u32,
}

impl ConstraintTable {
    pub fn for_robot(robot_id: u32, constraints: &[Constraint]) -> Self {
        let mut table = Self::default();
        for c in constraints.iter().filter(|c| c.robot_id == robot_id) {
            table.insert(c.kind);
        }
        table
    }

    pub fn insert(&mut self, kind: ConstraintKind) {
        match kind {
            ConstraintKind::Vertex { cell, step } => {
                self.vertex.entry(cell).or_default().push((step, step));
                self.horizon_of_change = self.horizon_of_change.max(step);
            }
            ConstraintKind::Window { cell, step_lo, step_hi } => {
                self.vertex.entry(cell).or_default().push((step_lo, step_hi));
                let last = if step_hi == FOREVER { step_lo } else { step_hi };
                self.horizon_of_change = self.horizon_of_change.max(last);
            }
            ConstraintKind::Edge { from, to, step } => {
                self.edges.insert((from, to, step));
                self.horizon_of_change = self.horizon_of_change.max(step + 1);
            }
        }
    }

    pub fn vertex_forbidden(&self, cell: Cell, step: u32) -> bool {
        self.vertex.get(&cell).is_some_and(|ws| ws.iter().any(|&(lo, hi)| lo <= step && step <= hi))
    }

    pub fn edge_forbidden(&self, from: Cell, to: Cell, step: u32) -> bool {
        self.edges.contains(&(from, to, step))
    }

    /// Earliest step from which `cell` is never forbidden again, or `None`
    /// if it stays forbidden forever.
    pub fn free_forever_from(&self, cell: Cell) -> Option<u32> {
        match self.vertex.get(&cell) {
            None => Some(0),
            Some(ws) => {
                let mut from = 0u32;
                for &(_, hi) in ws {
                    if hi == FOREVER {
                        return None;
                    }
                    from = from.max(hi + 1);
                }
                Some(from)
            }
        }
    }

    pub fn horizon_of_change(&self) -> u32 {
        self.horizon_of_change
    }
}

/// Static shortest-path distances to `goal` over free cells (`u32::MAX` when
/// unreachable). Used as an admissible A* heuristic.
fn distances_to(world: &GridWorld, goal: Cell) -> Vec<u32> {
    let mut dist = vec![u32::MAX; world.cell_count()];
    let mut queue = VecDeque::new();
    dist[world.index(goal)] = 0;
    queue.push_back(goal);
    while let Some(c) = queue.pop_front() {
        let d = dist[world.index(c)];
        for n in c.four_neighbors() {
            if world.is_free(n) && dist[world.index(n)] == u32::MAX {
                dist[world.index(n)] = d + 1;
                queue.push_back(n);
            }
        }
    }
    dist
}

struct Node {
    cell: Cell,
    parent: usize,
}

/// Space-time A* from `robot.cell` to `robot.goal` honouring every
/// constraint addressed to `robot.id`. Returns the path with the earliest
/// arrival step after which the robot can stay parked at its goal.
///
/// Successors are expanded in N, E, S, W, wait order; among equal `f`
/// values the lower step and then the earlier-generated node wins.
pub fn low_level_search(
    world: &GridWorld,
    robot: &RobotState,
    constraints: &[Constraint],
    horizon: u32,
) -> Result<SpaceTimePath, PlanError> {
    robot.validate(world)?;
    let table = ConstraintTable::for_robot(robot.id, constraints);
    let infeasible = || PlanError::Infeasible {
        robot_id: robot.id,
        constraints: constraints.iter().filter(|c| c.robot_id == robot.id).copied().collect(),
    };

    let dist = distances_to(world, robot.goal);
    let h = |c: Cell| dist[world.index(c)];
    if h(robot.cell) == u32::MAX || table.vertex_forbidden(robot.cell, 0) {
        return Err(infeasible());
    }
    let goal_from = table.free_forever_from(robot.goal).ok_or_else(infeasible)?;
    let time_cap = table.horizon_of_change() + 1;

    let mut nodes = vec![Node { cell: robot.cell, parent: usize::MAX }];
    let mut open = BinaryHeap::new();
    let mut seq = 0u64;
    open.push(Reverse((h(robot.cell), 0u32, seq, 0usize)));
    let mut closed: HashSet<(Cell, u32)> = HashSet::new();

    while let Some(Reverse((_, step, _, idx))) = open.pop() {
        let cell = nodes[idx].cell;
        if !closed.insert((cell, step.min(time_cap))) {
            continue;
        }
        if cell == robot.goal && step >= goal_from {
            let mut cells = Vec::with_capacity(step as usize + 1);
            let mut i = idx;
            while i != usize::MAX {
                cells.push(nodes[i].cell);
                i = nodes[i].parent;
            }
            cells.reverse();
            return Ok(SpaceTimePath::new(robot.id, cells));
        }
        if step >= horizon {
            continue;
        }
        let next = step + 1;
        for n in cell.four_neighbors().into_iter().chain(std::iter::once(cell)) {
            if !world.is_free(n) || h(n) == u32::MAX {
                continue;
            }
            if table.vertex_forbidden(n, next) || table.edge_forbidden(cell, n, step) {
                continue;
            }
            if closed.contains(&(n, next.min(time_cap))) {
                continue;
            }
            seq += 1;
            nodes.push(Node { cell: n, parent: idx });
            open.push(Reverse((next + h(n), next, seq, nodes.len() - 1)));
        }
    }
    Err(infeasible())
}
