//! Closed-loop warehouse navigation with one decision per grid transition.
//!
//! Every step each robot that has not arrived either moves one cell, waits
//! as planned, or halts. Halts are logged separately from the executed path
//! and cost one full transition.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{LoopBudget, OrchestratorConfig};
use crate::metrics::{completion_time, CompletionTimes, KpiRecord, StopLog, Trajectory};
use crate::planner::{plan_with, PlanConfig, PlanError, PlannerOptions, SpaceTimePath};
use crate::radio::{
    allocate, required_power, select_mcs, simulate_transmission, McsTable, PathGainMap, RadioConfig, RadioError,
    Shadowing, TxParams,
};
use crate::world::{Cell, GridWorld, HumanTrack, RobotState, WorldError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    StopAndGo,
    LorcP,
    LorcSc,
    LorcScP,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::StopAndGo, Method::LorcP, Method::LorcSc, Method::LorcScP];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::StopAndGo => "stop_and_go",
            Method::LorcP => "lorc_p",
            Method::LorcSc => "lorc_sc",
            Method::LorcScP => "lorc_sc_p",
        }
    }

    fn semantic_payload(self) -> bool {
        matches!(self, Method::LorcSc | Method::LorcScP)
    }

    fn predictive_power(self) -> bool {
        matches!(self, Method::LorcP | Method::LorcScP)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| format!("unknown warehouse method {s:?}"))
    }
}

#[derive(Debug, Error)]
pub enum WarehouseError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error("invalid warehouse setup: {0}")]
    Invalid(String),
}

/// Uplink parameters shared by all robots.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkSetup {
    pub noise_dbm: f64,
    pub mcs: McsTable,
    pub bler_target: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payloads {
    pub raw_bytes: u64,
    pub semantic_bytes: u64,
}

#[derive(Clone, Debug)]
pub struct WarehouseSetup {
    pub world: GridWorld,
    pub robots: Vec<RobotState>,
    pub humans: Vec<HumanTrack>,
    /// Each human track starts after a per-seed delay drawn from `0..=jitter`.
    pub human_start_jitter: u32,
    pub forecast_horizon: u32,
    pub gain_map: PathGainMap,
    pub link: LinkSetup,
    pub config: OrchestratorConfig,
    pub budget: LoopBudget,
    pub payloads: Payloads,
    /// Consecutive halts after which Stop-and-Go plans a local detour.
    pub stall_replan_after: u32,
    pub max_steps: u32,
    pub planner: PlannerOptions,
}

impl WarehouseSetup {
    pub fn validate(&self) -> Result<(), WarehouseError> {
        if self.robots.is_empty() {
            return Err(WarehouseError::Invalid("no robots".into()));
        }
        let mut starts = BTreeSet::new();
        let mut goals = BTreeSet::new();
        let mut ids = BTreeSet::new();
        for r in &self.robots {
            r.validate(&self.world)?;
            if !ids.insert(r.id) {
                return Err(WarehouseError::Invalid(format!("duplicate robot id {}", r.id)));
            }
            if !starts.insert(r.cell) || !goals.insert(r.goal) {
                return Err(WarehouseError::Invalid(format!("robot {} shares a start or goal", r.id)));
            }
        }
        for h in &self.humans {
            for c in h.waypoints() {
                self.world.check_in_bounds(*c)?;
            }
        }
        if !self.gain_map.matches(&self.world) {
            return Err(WarehouseError::Invalid("gain map does not cover the free cells of the world".into()));
        }
        if self.forecast_horizon == 0 {
            return Err(WarehouseError::Invalid("forecast_horizon must be >= 1".into()));
        }
        if self.config.ra.priority_weights.len() != self.robots.len() {
            return Err(WarehouseError::Invalid(format!(
                "{} priority weights for {} robots",
                self.config.ra.priority_weights.len(),
                self.robots.len()
            )));
        }
        if self.max_steps == 0 {
            return Err(WarehouseError::Invalid("max_steps must be >= 1".into()));
        }
        Ok(())
    }

    fn gain(&self, c: Cell) -> f64 {
        self.gain_map.gain_at(c).expect("validated map covers free cells")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    HumanAhead,
    RobotAhead,
    LinkFailure,
    LateCommand,
    PlanInfeasible,
    Blocked,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "action", content = "reason")]
pub enum Action {
    Move,
    Wait,
    Halt(HaltReason),
}

/// Command issued to one robot at one decision instant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub step: u32,
    pub robot_id: u32,
    pub from: Cell,
    pub to: Cell,
    pub action: Action,
    /// Loop round trip behind the command, for uplinking methods.
    pub rtt_s: Option<f64>,
    pub deadline_s: f64,
}

struct Agent {
    id: u32,
    weight: f64,
    cell: Cell,
    goal: Cell,
    arrived_at: Option<u32>,
    path: Vec<Cell>,
    route: VecDeque<Cell>,
    streak: u32,
    shadow: Shadowing,
    shadow_rng: ChaCha8Rng,
    tx_rng: ChaCha8Rng,
    gain_now: f64,
    measured_gain: f64,
    measured_cell: Cell,
}

impl Agent {
    fn active(&self) -> bool {
        self.arrived_at.is_none()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WarehouseCounters {
    pub link_failures: u32,
    pub late_commands: u32,
    pub plan_failures: u32,
    pub human_halts: u32,
    pub robot_halts: u32,
    pub detours: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarehouseResult {
    pub method: Method,
    pub finished: bool,
    pub steps: u32,
    pub completion: CompletionTimes,
    pub stops: StopLog,
    pub commands: Vec<Command>,
    pub rtt_samples_s: Vec<f64>,
    pub uplink_samples_s: Vec<f64>,
    pub counters: WarehouseCounters,
}

impl WarehouseResult {
    pub fn kpi(&self) -> KpiRecord {
        KpiRecord {
            completion_time_s: self.completion.per_robot_s.clone(),
            makespan_s: self.completion.max_s,
            stop_events: self.stops.count() as u32,
            rtt_samples_s: self.rtt_samples_s.clone(),
            ..KpiRecord::default()
        }
    }

    /// Mean length of a halt episode: consecutive halted steps of one robot
    /// merged into one wait.
    pub fn mean_halt_episode_s(&self) -> Option<f64> {
        let mut by_robot: BTreeMap<u32, Vec<(u32, f64)>> = BTreeMap::new();
        for e in &self.stops.events {
            by_robot.entry(e.robot_id).or_default().push((e.step, e.duration_s));
        }
        let mut episodes = Vec::new();
        for mut evs in by_robot.into_values() {
            evs.sort_by_key(|e| e.0);
            let mut cur: Option<(u32, f64)> = None;
            for (step, d) in evs {
                cur = match cur {
                    Some((last, total)) if step == last + 1 => Some((step, total + d)),
                    Some((_, total)) => {
                        episodes.push(total);
                        Some((step, d))
                    }
                    None => Some((step, d)),
                };
            }
            if let Some((_, total)) = cur {
                episodes.push(total);
            }
        }
        if episodes.is_empty() {
            None
        } else {
            Some(episodes.iter().sum::<f64>() / episodes.len() as f64)
        }
    }
}

/// One warehouse run for a fixed method and seed.
///
/// Shadowing, HARQ draws and human start delays come from per-robot and
/// per-purpose streams of the seed, so all methods see the same randomness.
pub struct WarehouseSim<'a> {
    setup: &'a WarehouseSetup,
    method: Method,
    step: u32,
    agents: Vec<Agent>,
    humans: Vec<HumanTrack>,
    stops: StopLog,
    commands: Vec<Command>,
    rtt_samples_s: Vec<f64>,
    uplink_samples_s: Vec<f64>,
    counters: WarehouseCounters,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl<'a> WarehouseSim<'a> {
    pub fn new(setup: &'a WarehouseSetup, method: Method, seed: u64) -> Result<Self, WarehouseError> {
        use rand::Rng;

        setup.validate()?;
        let mut human_rng = stream(seed, 1);
        let humans =
            setup.humans.iter().map(|h| h.delayed(human_rng.random_range(0..=setup.human_start_jitter))).collect();
        let mut agents = Vec::with_capacity(setup.robots.len());
        for (i, r) in setup.robots.iter().enumerate() {
            let mut shadow_rng = stream(seed, 100 + 2 * r.id as u64);
            let shadow = setup.gain_map.shadowing(&mut shadow_rng);
            let pilot = setup.gain(r.cell) + shadow.current();
            let route = if method == Method::StopAndGo {
                let solo = plan_with(&setup.world, &[r.clone()], &[], &PlanConfig::default(), &setup.planner)?;
                solo[0].cells[1..].iter().copied().collect()
            } else {
                VecDeque::new()
            };
            agents.push(Agent {
                id: r.id,
                weight: setup.config.ra.priority_weights[i],
                cell: r.cell,
                goal: r.goal,
                arrived_at: (r.cell == r.goal).then_some(0),
                path: vec![r.cell],
                route,
                streak: 0,
                shadow,
                shadow_rng,
                tx_rng: stream(seed, 101 + 2 * r.id as u64),
                gain_now: pilot,
                measured_gain: pilot,
                measured_cell: r.cell,
            });
        }
        Ok(Self {
            setup,
            method,
            step: 0,
            agents,
            humans,
            stops: StopLog::default(),
            commands: Vec::new(),
            rtt_samples_s: Vec::new(),
            uplink_samples_s: Vec::new(),
            counters: WarehouseCounters::default(),
        })
    }

    pub fn step_index(&self) -> u32 {
        self.step
    }

    pub fn done(&self) -> bool {
        self.agents.iter().all(|a| !a.active())
    }

    pub fn positions(&self) -> Vec<(u32, Cell)> {
        self.agents.iter().map(|a| (a.id, a.cell)).collect()
    }

    pub fn human_positions(&self, step: u32) -> Vec<Cell> {
        self.humans.iter().map(|h| h.position(step)).collect()
    }

    /// Forecast human cells relative to the current step (`k = 1..=H`).
    fn forecasts(&self) -> Vec<(Cell, u32)> {
        let h = self.setup.forecast_horizon;
        self.humans.iter().flat_map(|tr| (1..=h).map(move |k| (tr.position(self.step + k), k))).collect()
    }

    /// Runs one decision instant and returns the commands issued.
    pub fn decision_step(&mut self) -> Result<Vec<Command>, WarehouseError> {
        if self.done() {
            return Ok(Vec::new());
        }
        for a in &mut self.agents {
            let s = a.shadow.advance(&mut a.shadow_rng);
            a.gain_now = self.setup.gain(a.cell) + s;
        }
        let forecasts = self.forecasts();
        let mut intents = match self.method {
            Method::StopAndGo => self.stop_and_go_intents(&forecasts),
            _ => self.lorc_intents(&forecasts)?,
        };
        self.resolve(&mut intents);
        let cmds = self.apply(&intents, &forecasts)?;
        self.step += 1;
        Ok(cmds)
    }

    pub fn run(mut self) -> Result<WarehouseResult, WarehouseError> {
        while !self.done() && self.step < self.setup.max_steps {
            self.decision_step()?;
        }
        self.finish()
    }

    fn stop_and_go_intents(&self, forecasts: &[(Cell, u32)]) -> Vec<Intent> {
        let human_cells: BTreeSet<Cell> = forecasts.iter().map(|f| f.0).collect();
        self.agents
            .iter()
            .enumerate()
            .filter(|(_, a)| a.active())
            .map(|(i, a)| {
                let next = a.route.front().copied().unwrap_or(a.cell);
                let action = if next == a.cell {
                    Action::Wait
                } else if human_cells.contains(&next) {
                    Action::Halt(HaltReason::HumanAhead)
                } else if self.agents.iter().any(|b| b.id != a.id && b.cell == next) {
                    Action::Halt(HaltReason::RobotAhead)
                } else {
                    Action::Move
                };
                Intent { agent: i, to: next, action, rtt_s: None }
            })
            .collect()
    }

    fn lorc_intents(&mut self, forecasts: &[(Cell, u32)]) -> Result<Vec<Intent>, WarehouseError> {
        let setup = self.setup;
        let ra = &setup.config.ra;
        let active: Vec<usize> = (0..self.agents.len()).filter(|&i| self.agents[i].active()).collect();
        let payload =
            if self.method.semantic_payload() { setup.payloads.semantic_bytes } else { setup.payloads.raw_bytes };

        let mut links = Vec::with_capacity(active.len());
        for &i in &active {
            let a = &self.agents[i];
            let predicted = if self.method.predictive_power() {
                setup.gain(a.cell) + (a.measured_gain - setup.gain(a.measured_cell))
            } else {
                a.measured_gain
            };
            let power = required_power(predicted, setup.link.noise_dbm, ra.target_snr_db, ra.max_power_dbm);
            let expected = power.power_dbm + predicted - setup.link.noise_dbm;
            let choice = select_mcs(&setup.link.mcs, expected, setup.link.bler_target);
            let snr = power.power_dbm + a.gain_now - setup.link.noise_dbm;
            links.push((choice.position, snr));
        }
        let rates: Vec<f64> = links.iter().map(|(p, _)| setup.link.mcs.entry(*p).rate_bps_per_hz).collect();
        let wsum: f64 = active.iter().map(|&i| self.agents[i].weight).sum();
        let weights = active
            .iter()
            .map(|&i| if wsum > 0.0 { self.agents[i].weight / wsum } else { 1.0 / active.len() as f64 })
            .collect();
        let shares = allocate(&rates, &RadioConfig { priority_weights: weights, ..ra.clone() })?;

        let mut status = Vec::with_capacity(active.len());
        for (k, &i) in active.iter().enumerate() {
            let (pos, snr) = links[k];
            let params = TxParams {
                bandwidth_hz: shares[k] * setup.link.mcs.bandwidth_hz(),
                slot_s: setup.link.mcs.slot_s(),
                max_retx: Some(ra.max_retx),
            };
            let a = &mut self.agents[i];
            let out = simulate_transmission(payload, setup.link.mcs.entry(pos), &[snr], &params, &mut a.tx_rng);
            a.measured_gain = a.gain_now;
            a.measured_cell = a.cell;
            let rtt = out.latency_s + setup.budget.compute_s();
            self.uplink_samples_s.push(out.latency_s);
            let halt = if !out.success {
                self.counters.link_failures += 1;
                Some(HaltReason::LinkFailure)
            } else {
                self.rtt_samples_s.push(rtt);
                if rtt < setup.budget.deadline_s {
                    None
                } else {
                    self.counters.late_commands += 1;
                    Some(HaltReason::LateCommand)
                }
            };
            status.push((rtt, halt));
        }

        let parked = self.agents.iter().filter(|a| !a.active()).map(|a| a.cell);
        let world = setup.world.clone().with_blocked(parked)?;
        let robots: Vec<RobotState> = active
            .iter()
            .map(|&i| RobotState::new(self.agents[i].id, self.agents[i].cell, self.agents[i].goal))
            .collect();
        let mut pp = setup.config.pp.clone();
        if pp.priority_robot.is_some_and(|id| robots.iter().all(|r| r.id != id)) {
            pp.priority_robot = None;
        }
        let paths = match plan_with(&world, &robots, forecasts, &pp, &setup.planner) {
            Ok(p) => Some(p),
            Err(PlanError::Infeasible { .. }) => {
                self.counters.plan_failures += 1;
                None
            }
            Err(e) => return Err(e.into()),
        };

        Ok(active
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let (rtt, halt) = status[k];
                let cell = self.agents[i].cell;
                let (to, action) = match (&paths, halt) {
                    (None, _) => (cell, Action::Halt(HaltReason::PlanInfeasible)),
                    (Some(_), Some(reason)) => (cell, Action::Halt(reason)),
                    (Some(p), None) => {
                        let next = p[k].at(1);
                        (next, if next == cell { Action::Wait } else { Action::Move })
                    }
                };
                Intent { agent: i, to, action, rtt_s: Some(rtt) }
            })
            .collect())
    }

    /// Turns moves that would collide on execution into halts, until stable.
    fn resolve(&self, intents: &mut [Intent]) {
        let next_humans: BTreeSet<Cell> = self.human_positions(self.step + 1).into_iter().collect();
        loop {
            let mut finals: BTreeMap<usize, Cell> = self.agents.iter().enumerate().map(|(i, a)| (i, a.cell)).collect();
            for it in intents.iter() {
                if it.action == Action::Move {
                    finals.insert(it.agent, it.to);
                }
            }
            let mut changed = false;
            for k in 0..intents.len() {
                if intents[k].action != Action::Move {
                    continue;
                }
                let me = intents[k].agent;
                let to = intents[k].to;
                let from = self.agents[me].cell;
                let vertex = finals.iter().any(|(j, c)| *j != me && *c == to);
                let swap = finals.iter().any(|(j, c)| *j != me && *c == from && self.agents[*j].cell == to);
                if vertex || swap || next_humans.contains(&to) {
                    intents[k].to = from;
                    intents[k].action = Action::Halt(HaltReason::Blocked);
                    changed = true;
                    break;
                }
            }
            if !changed {
                return;
            }
        }
    }

    fn apply(&mut self, intents: &[Intent], forecasts: &[(Cell, u32)]) -> Result<Vec<Command>, WarehouseError> {
        let traverse = self.setup.world.cell_transition_time();
        let mut cmds = Vec::with_capacity(intents.len());
        let mut detour = Vec::new();
        for it in intents {
            let a = &mut self.agents[it.agent];
            let from = a.cell;
            match it.action {
                Action::Move | Action::Wait => {
                    a.cell = it.to;
                    a.path.push(it.to);
                    a.route.pop_front();
                    a.streak = 0;
                }
                Action::Halt(reason) => {
                    self.stops.record(a.id, self.step, traverse);
                    match reason {
                        HaltReason::HumanAhead => self.counters.human_halts += 1,
                        HaltReason::RobotAhead | HaltReason::Blocked => self.counters.robot_halts += 1,
                        _ => {}
                    }
                    a.streak += 1;
                    if self.method == Method::StopAndGo && a.streak >= self.setup.stall_replan_after {
                        detour.push(it.agent);
                    }
                }
            }
            if a.cell == a.goal && a.route.is_empty() {
                a.arrived_at = Some(self.step + 1);
            }
            cmds.push(Command {
                step: self.step,
                robot_id: a.id,
                from,
                to: a.cell,
                action: it.action,
                rtt_s: it.rtt_s,
                deadline_s: self.setup.budget.deadline_s,
            });
        }
        for i in detour {
            self.local_detour(i, forecasts)?;
        }
        self.commands.extend_from_slice(&cmds);
        Ok(cmds)
    }

    /// Solo replan that treats the other robots and every forecast human
    /// cell as static obstacles.
    fn local_detour(&mut self, i: usize, forecasts: &[(Cell, u32)]) -> Result<(), WarehouseError> {
        let own = self.agents[i].cell;
        let others = self.agents.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, b)| b.cell);
        let obstacles: BTreeSet<Cell> = others
            .chain(forecasts.iter().map(|f| f.0))
            .filter(|c| *c != own && self.setup.world.in_bounds(*c))
            .collect();
        let world = self.setup.world.clone().with_blocked(obstacles)?;
        let a = &self.agents[i];
        let robot = RobotState::new(a.id, a.cell, a.goal);
        match plan_with(&world, &[robot], &[], &PlanConfig::default(), &self.setup.planner) {
            Ok(p) => {
                let a = &mut self.agents[i];
                a.route = p[0].cells[1..].iter().copied().collect();
                a.streak = 0;
                self.counters.detours += 1;
                Ok(())
            }
            Err(PlanError::Infeasible { .. }) | Err(PlanError::World(_)) => Ok(()),
            Err(e) => Err(e.into()),
        }
    }

    fn finish(self) -> Result<WarehouseResult, WarehouseError> {
        let traverse = self.setup.world.cell_transition_time();
        let finished = self.done();
        let completion = if finished {
            let runs: Vec<Trajectory> = self
                .agents
                .iter()
                .map(|a| Trajectory { path: SpaceTimePath::new(a.id, a.path.clone()), goal: a.goal })
                .collect();
            completion_time(&runs, &self.stops, traverse).map_err(|e| WarehouseError::Invalid(e.to_string()))?
        } else {
            let per_robot_s: BTreeMap<u32, f64> =
                self.agents.iter().map(|a| (a.id, a.arrived_at.unwrap_or(self.step) as f64 * traverse)).collect();
            let max_s = per_robot_s.values().cloned().fold(0.0, f64::max);
            CompletionTimes { per_robot_s, max_s }
        };
        Ok(WarehouseResult {
            method: self.method,
            finished,
            steps: self.step,
            completion,
            stops: self.stops,
            commands: self.commands,
            rtt_samples_s: self.rtt_samples_s,
            uplink_samples_s: self.uplink_samples_s,
            counters: self.counters,
        })
    }
}

struct Intent {
    agent: usize,
    to: Cell,
    action: Action,
    rtt_s: Option<f64>,
}

pub fn run_warehouse(setup: &WarehouseSetup, method: Method, seed: u64) -> Result<WarehouseResult, WarehouseError> {
    WarehouseSim::new(setup, method, seed)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::default_sense;
    use crate::radio::Fairness;
    use proptest::prelude::*;

    fn config(n: usize) -> OrchestratorConfig {
        OrchestratorConfig {
            pp: PlanConfig::default(),
            ra: RadioConfig::equal_weights(Fairness::MaxMin, n),
            sense: default_sense(),
        }
    }

    fn setup(world: GridWorld, robots: Vec<RobotState>, humans: Vec<HumanTrack>, gains: PathGainMap) -> WarehouseSetup {
        let n = robots.len();
        WarehouseSetup {
            world,
            robots,
            humans,
            human_start_jitter: 0,
            forecast_horizon: 2,
            gain_map: gains,
            link: LinkSetup { noise_dbm: -100.0, mcs: McsTable::default_table(), bler_target: 0.1 },
            config: config(n),
            budget: LoopBudget::default(),
            payloads: Payloads { raw_bytes: 2_000, semantic_bytes: 1_280 },
            stall_replan_after: 3,
            max_steps: 200,
            planner: PlannerOptions::default(),
        }
    }

    fn c(x: i32, y: i32) -> Cell {
        Cell::new(x, y)
    }

    fn pacing(cells: &[Cell], reps: usize) -> HumanTrack {
        let mut wp = Vec::new();
        for _ in 0..reps {
            wp.extend_from_slice(cells);
            wp.extend(cells[1..cells.len() - 1].iter().rev());
        }
        HumanTrack::new(wp, 2).unwrap()
    }

    #[test]
    fn clear_links_follow_shortest_paths() {
        let world = GridWorld::open(6, 6).unwrap();
        let gains = PathGainMap::uniform(&world, -70.0, 0.9, 0.0).unwrap();
        let robots = vec![RobotState::new(1, c(0, 0), c(5, 0)), RobotState::new(2, c(0, 5), c(5, 5))];
        let s = setup(world, robots, vec![], gains);
        for m in Method::ALL {
            let r = run_warehouse(&s, m, 3).unwrap();
            assert!(r.finished, "{m}");
            assert_eq!(r.stops.count(), 0, "{m}");
            assert_eq!(r.completion.per_robot_s[&1], 5.0 * 1.4, "{m}");
            assert!((r.completion.max_s - 7.0).abs() < 1e-12, "{m}");
        }
    }

    #[test]
    fn human_in_corridor_halts_stop_and_go_only() {
        let world = GridWorld::open(7, 5).unwrap();
        let gains = PathGainMap::uniform(&world, -70.0, 0.9, 0.0).unwrap();
        let robots = vec![RobotState::new(1, c(0, 2), c(6, 2))];
        let human = pacing(&[c(3, 1), c(3, 2), c(3, 3)], 30);
        let s = setup(world, robots, vec![human], gains);
        let sg = run_warehouse(&s, Method::StopAndGo, 0).unwrap();
        let scp = run_warehouse(&s, Method::LorcScP, 0).unwrap();
        assert!(sg.finished && scp.finished);
        assert!(sg.stops.halt_seconds(1) > 0.0);
        assert!(sg.counters.human_halts > 0);
        assert_eq!(scp.stops.count(), 0);
        assert!(scp.completion.max_s < sg.completion.max_s);
    }

    #[test]
    fn dead_zone_stalls_reactive_power_control() {
        let world = GridWorld::open(10, 1).unwrap();
        let g: Vec<f64> = (0..10).map(|x| if x >= 5 { -95.0 } else { -70.0 }).collect();
        let gains = PathGainMap::new(10, 1, g, 0.9, 0.0).unwrap();
        let robots = vec![RobotState::new(1, c(0, 0), c(9, 0))];
        let s = setup(world, robots, vec![], gains);
        let sc = run_warehouse(&s, Method::LorcSc, 5).unwrap();
        let scp = run_warehouse(&s, Method::LorcScP, 5).unwrap();
        assert_eq!(sc.counters.link_failures, 1);
        assert_eq!(scp.counters.link_failures, 0);
        assert!(sc.stops.count() > scp.stops.count());
        assert!((sc.completion.max_s - 10.0 * 1.4).abs() < 1e-9);
        assert!((scp.completion.max_s - 9.0 * 1.4).abs() < 1e-9);
    }

    #[test]
    fn raw_payload_over_budget_waits_every_step() {
        let world = GridWorld::open(4, 1).unwrap();
        let gains = PathGainMap::uniform(&world, -70.0, 0.9, 0.0).unwrap();
        let robots = vec![RobotState::new(1, c(0, 0), c(3, 0))];
        let mut s = setup(world, robots, vec![], gains);
        s.payloads.raw_bytes = 2_000_000;
        s.max_steps = 10;
        let r = run_warehouse(&s, Method::LorcP, 0).unwrap();
        assert!(!r.finished);
        assert_eq!(r.counters.late_commands, 10);
        assert!(r.commands.iter().all(|c| c.action == Action::Halt(HaltReason::LateCommand)));
    }

    #[test]
    fn same_seed_same_run() {
        let world = GridWorld::open(8, 8).unwrap();
        let gains = PathGainMap::uniform(&world, -85.0, 0.8, 4.0).unwrap();
        let robots = vec![RobotState::new(1, c(0, 0), c(7, 7)), RobotState::new(2, c(7, 0), c(0, 7))];
        let mut s = setup(world, robots, vec![pacing(&[c(3, 3), c(4, 3), c(5, 3)], 20)], gains);
        s.human_start_jitter = 4;
        for m in Method::ALL {
            let a = run_warehouse(&s, m, 17).unwrap();
            let b = run_warehouse(&s, m, 17).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn halt_episodes_merge_consecutive_steps() {
        let mut stops = StopLog::default();
        for step in [2, 3, 4, 9] {
            stops.record(1, step, 1.4);
        }
        stops.record(2, 3, 1.4);
        let r = WarehouseResult {
            method: Method::StopAndGo,
            finished: true,
            steps: 0,
            completion: CompletionTimes { per_robot_s: BTreeMap::new(), max_s: 0.0 },
            stops,
            commands: vec![],
            rtt_samples_s: vec![],
            uplink_samples_s: vec![],
            counters: WarehouseCounters::default(),
        };
        // episodes 4.2, 1.4 and 1.4
        assert!((r.mean_halt_episode_s().unwrap() - 7.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
        assert!("lorc".parse::<Method>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn late_loops_never_move(seed in 0u64..1000, raw in 100_000u64..1_500_000, sigma in 0.0f64..8.0) {
            let world = GridWorld::open(6, 6).unwrap();
            let gains = PathGainMap::uniform(&world, -95.0, 0.7, sigma).unwrap();
            let robots = vec![RobotState::new(1, c(0, 0), c(5, 5)), RobotState::new(2, c(5, 0), c(0, 5))];
            let mut s = setup(world, robots, vec![pacing(&[c(2, 2), c(3, 2), c(3, 3)], 10)], gains);
            s.payloads.raw_bytes = raw;
            s.max_steps = 60;
            for m in [Method::LorcScP, Method::LorcP] {
                let r = run_warehouse(&s, m, seed).unwrap();
                for cmd in &r.commands {
                    let rtt = cmd.rtt_s.unwrap();
                    if rtt >= cmd.deadline_s {
                        prop_assert!(matches!(cmd.action, Action::Halt(_)));
                        prop_assert_eq!(cmd.from, cmd.to);
                    }
                }
            }
        }

        #[test]
        fn completion_is_arrival_step_times_traverse(seed in 0u64..1000) {
            let world = GridWorld::open(6, 6).unwrap();
            let gains = PathGainMap::uniform(&world, -90.0, 0.8, 3.0).unwrap();
            let robots = vec![RobotState::new(1, c(0, 0), c(5, 5)), RobotState::new(2, c(0, 5), c(5, 0))];
            let mut s = setup(world, robots, vec![pacing(&[c(2, 3), c(3, 3), c(4, 3)], 20)], gains);
            s.human_start_jitter = 5;
            for m in Method::ALL {
                let r = run_warehouse(&s, m, seed).unwrap();
                prop_assert!(r.finished);
                for (id, t) in &r.completion.per_robot_s {
                    let last = r.commands.iter().filter(|c| c.robot_id == *id).map(|c| c.step).max().unwrap_or(0);
                    prop_assert!((t - (last + 1) as f64 * 1.4).abs() < 1e-9);
                }
                for w in r.commands.windows(1) {
                    prop_assert!(w[0].from.is_adjacent_or_same(w[0].to));
                }
            }
        }
    }
}
