use std::collections::BTreeSet;

use super::search::low_level_search;
use super::{
    makespan, sum_of_costs, Constraint, Objective, PlanConfig, PlanError, PlannerOptions, SpaceTimePath, FOREVER,
};
use crate::world::{Cell, GridWorld, RobotState};

/// Upper bound on conflict-resolution rounds per priority ordering.
const MAX_RESOLUTION_ROUNDS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConflictKind {
    /// Both robots occupy `cell` at the conflict step.
    Vertex { cell: Cell },
    /// Robot `a` moves `from -> to` while robot `b` moves `to -> from`.
    Edge { from: Cell, to: Cell },
    /// Both robots visit `cell` less than the required gap apart: robot `a`
    /// at `step_a`, robot `b` at `step_b`.
    Gap { cell: Cell, step_a: u32, step_b: u32 },
}

/// First conflict between robots `a` and `b` (ids), at `step`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conflict {
    pub a: u32,
    pub b: u32,
    pub step: u32,
    pub kind: ConflictKind,
}

/// Earliest vertex or swap conflict among `paths`, with paths padded at
/// their goals. Vertex conflicts win over edge conflicts at equal steps.
pub fn detect_first_conflict(paths: &[SpaceTimePath]) -> Option<Conflict> {
    detect_first_conflict_with_gap(paths, 0)
}

/// Like [`detect_first_conflict`], additionally reporting two robots that
/// visit the same cell at most `gap` steps apart.
pub fn detect_first_conflict_with_gap(paths: &[SpaceTimePath], gap: u32) -> Option<Conflict> {
    let last = makespan(paths) + gap + 1;
    for t in 0..=last {
        for (i, pi) in paths.iter().enumerate() {
            for pj in &paths[i + 1..] {
                if pi.at(t) == pj.at(t) {
                    return Some(Conflict {
                        a: pi.robot_id,
                        b: pj.robot_id,
                        step: t,
                        kind: ConflictKind::Vertex { cell: pi.at(t) },
                    });
                }
            }
        }
        if gap > 0 {
            for (i, pi) in paths.iter().enumerate() {
                for pj in &paths[i + 1..] {
                    if let Some(c) = gap_conflict_at(pi, pj, t, gap) {
                        return Some(c);
                    }
                }
            }
        }
        for (i, pi) in paths.iter().enumerate() {
            for pj in &paths[i + 1..] {
                let (a0, a1) = (pi.at(t), pi.at(t + 1));
                if a0 != a1 && a0 == pj.at(t + 1) && a1 == pj.at(t) {
                    return Some(Conflict {
                        a: pi.robot_id,
                        b: pj.robot_id,
                        step: t,
                        kind: ConflictKind::Edge { from: a0, to: a1 },
                    });
                }
            }
        }
    }
    None
}

fn gap_conflict_at(pi: &SpaceTimePath, pj: &SpaceTimePath, t: u32, gap: u32) -> Option<Conflict> {
    // Only look forward from `t`: earlier pairings were examined at their
    // own (smaller) step.
    for dt in 1..=gap {
        let later = t + dt;
        let mk = |a: &SpaceTimePath, b: &SpaceTimePath, cell, sa, sb| Conflict {
            a: a.robot_id,
            b: b.robot_id,
            step: t,
            kind: ConflictKind::Gap { cell, step_a: sa, step_b: sb },
        };
        if pi.at(t) == pj.at(later) {
            return Some(mk(pi, pj, pi.at(t), t, later));
        }
        if pj.at(t) == pi.at(later) {
            return Some(mk(pi, pj, pj.at(t), later, t));
        }
    }
    None
}

/// Robot indices in priority order: `priority_robot` first, then ascending id.
pub fn priority_order(robots: &[RobotState], priority_robot: Option<u32>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..robots.len()).collect();
    order.sort_by_key(|&i| (Some(robots[i].id) != priority_robot, robots[i].id));
    order
}

/// Prioritized conflict-based search with default [`PlannerOptions`].
pub fn plan(
    world: &GridWorld,
    robots: &[RobotState],
    human_forecasts: &[(Cell, u32)],
    cfg: &PlanConfig,
) -> Result<Vec<SpaceTimePath>, PlanError> {
    plan_with(world, robots, human_forecasts, cfg, &PlannerOptions::default())
}

/// Plans conflict-free paths for `robots` (returned in input order).
///
/// Forecast human `(cell, step)` pairs are forbidden for every robot; under
/// `safety_first` each is widened in time and space. Robot-robot conflicts
/// are resolved by constraining the lower-priority robot with a window of
/// `±min_time_gap_at_conflict` steps around the higher-priority robot's
/// occupancy. Under `makespan` every priority ordering is tried (up to
/// `opts.max_permutation_robots` robots) and the one with the smallest
/// makespan, then smallest sum of arrival steps, is kept.
pub fn plan_with(
    world: &GridWorld,
    robots: &[RobotState],
    human_forecasts: &[(Cell, u32)],
    cfg: &PlanConfig,
    opts: &PlannerOptions,
) -> Result<Vec<SpaceTimePath>, PlanError> {
    validate_request(world, robots, cfg)?;
    let base: Vec<Vec<Constraint>> =
        robots.iter().map(|r| human_constraints(r.id, human_forecasts, cfg.objective, opts)).collect();
    let horizon = opts.horizon_for(world);
    let gap = cfg.min_time_gap_at_conflict;
    let order = priority_order(robots, cfg.priority_robot);

    if cfg.objective != Objective::Makespan || robots.len() > opts.max_permutation_robots {
        return resolve(world, robots, &order, &base, gap, horizon);
    }

    let mut best: Option<Vec<SpaceTimePath>> = None;
    let mut first_err = None;
    for perm in permutations(&order) {
        match resolve(world, robots, &perm, &base, gap, horizon) {
            Ok(paths) => {
                let key = (makespan(&paths), sum_of_costs(&paths));
                if best.as_ref().is_none_or(|b| key < (makespan(b), sum_of_costs(b))) {
                    best = Some(paths);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("at least one ordering was tried"))
}

fn validate_request(world: &GridWorld, robots: &[RobotState], cfg: &PlanConfig) -> Result<(), PlanError> {
    let mut ids = BTreeSet::new();
    let mut starts = BTreeSet::new();
    let mut goals = BTreeSet::new();
    for r in robots {
        r.validate(world)?;
        if !ids.insert(r.id) {
            return Err(PlanError::InvalidRequest(format!("duplicate robot id {}", r.id)));
        }
        if !starts.insert(r.cell) {
            return Err(PlanError::InvalidRequest(format!("two robots start at {}", r.cell)));
        }
        if !goals.insert(r.goal) {
            return Err(PlanError::InvalidRequest(format!("two robots share goal {}", r.goal)));
        }
    }
    if let Some(p) = cfg.priority_robot {
        if !ids.contains(&p) {
            return Err(PlanError::InvalidRequest(format!("priority robot {p} is not in the fleet")));
        }
    }
    Ok(())
}

/// Converts forecast human occupancy into constraints for one robot.
fn human_constraints(
    robot_id: u32,
    forecasts: &[(Cell, u32)],
    objective: Objective,
    opts: &PlannerOptions,
) -> Vec<Constraint> {
    let mut out = Vec::new();
    for &(cell, step) in forecasts {
        if step == 0 {
            continue;
        }
        match objective {
            Objective::Makespan => out.push(Constraint::vertex(robot_id, cell, step)),
            Objective::SafetyFirst => {
                let lo = step.saturating_sub(opts.safety_window).max(1);
                out.push(Constraint::window(robot_id, cell, lo, step + opts.safety_window));
                let r = opts.safety_radius as i32;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let d = dx.abs() + dy.abs();
                        if d == 0 || d > r {
                            continue;
                        }
                        out.push(Constraint::vertex(robot_id, Cell::new(cell.x + dx, cell.y + dy), step));
                    }
                }
            }
        }
    }
    out
}

/// Runs the prioritized resolution loop for one ordering.
fn resolve(
    world: &GridWorld,
    robots: &[RobotState],
    order: &[usize],
    base: &[Vec<Constraint>],
    gap: u32,
    horizon: u32,
) -> Result<Vec<SpaceTimePath>, PlanError> {
    let mut rank = vec![0usize; robots.len()];
    for (k, &i) in order.iter().enumerate() {
        rank[i] = k;
    }
    let mut constraints: Vec<Vec<Constraint>> = base.to_vec();
    let mut paths = Vec::with_capacity(robots.len());
    for (i, r) in robots.iter().enumerate() {
        paths.push(low_level_search(world, r, &constraints[i], horizon)?);
    }
    let index_of = |id: u32| robots.iter().position(|r| r.id == id).expect("known id");

    for _ in 0..MAX_RESOLUTION_ROUNDS {
        let Some(conflict) = detect_first_conflict_with_gap(&paths, gap) else {
            return Ok(paths);
        };
        let (ia, ib) = (index_of(conflict.a), index_of(conflict.b));
        let (mut hi, mut lo) = if rank[ia] < rank[ib] { (ia, ib) } else { (ib, ia) };
        if let ConflictKind::Gap { step_a, step_b, .. } = conflict.kind {
            // A robot cannot be moved off the cell it starts on, so the
            // other robot yields instead.
            let lo_step = if robots[lo].id == conflict.a { step_a } else { step_b };
            if lo_step == 0 {
                std::mem::swap(&mut hi, &mut lo);
            }
        }
        let lo_id = robots[lo].id;
        let added = resolution_constraints(&conflict, &paths[hi], &paths[lo], lo_id, gap);
        constraints[lo].extend(added);
        paths[lo] = low_level_search(world, &robots[lo], &constraints[lo], horizon)?;
    }
    Err(PlanError::InvalidRequest(format!("conflict resolution did not converge in {MAX_RESOLUTION_ROUNDS} rounds")))
}

/// Constraints placed on the lower-priority robot for one conflict.
fn resolution_constraints(
    conflict: &Conflict,
    hi: &SpaceTimePath,
    lo: &SpaceTimePath,
    lo_id: u32,
    gap: u32,
) -> Vec<Constraint> {
    match conflict.kind {
        ConflictKind::Vertex { cell } => vec![occupancy_window(hi, cell, conflict.step, lo_id, gap)],
        ConflictKind::Gap { cell, step_a, step_b } => {
            let hi_step = if hi.robot_id == conflict.a { step_a } else { step_b };
            vec![occupancy_window(hi, cell, hi_step, lo_id, gap)]
        }
        ConflictKind::Edge { .. } => {
            let t = conflict.step;
            let (from, to) = (lo.at(t), lo.at(t + 1));
            (t.saturating_sub(gap)..=t + gap).map(|s| Constraint::edge(lo_id, from, to, s)).collect()
        }
    }
}

/// Window covering the higher-priority robot's contiguous stay on `cell`
/// around `step`, widened by `gap`. A stay that reaches the goal is open-ended.
fn occupancy_window(hi: &SpaceTimePath, cell: Cell, step: u32, lo_id: u32, gap: u32) -> Constraint {
    debug_assert_eq!(hi.at(step), cell);
    let mut first = step;
    while first > 0 && hi.at(first - 1) == cell {
        first -= 1;
    }
    let parked = cell == hi.goal() && step >= hi.arrival_step();
    let mut last = step;
    if !parked {
        while last < hi.arrival_step() && hi.at(last + 1) == cell {
            last += 1;
        }
    }
    let parked = parked || (cell == hi.goal() && last == hi.arrival_step());
    let lo = first.saturating_sub(gap).max(1);
    let hi_bound = if parked { FOREVER } else { last + gap };
    Constraint::window(lo_id, cell, lo, hi_bound.max(lo))
}

/// All permutations of `base`, starting with `base` itself.
fn permutations(base: &[usize]) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for k in 0..rest.len() {
            let x = rest.remove(k);
            prefix.push(x);
            rec(prefix, rest, out);
            prefix.pop();
            rest.insert(k, x);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut base.to_vec(), &mut out);
    out
}
