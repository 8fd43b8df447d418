use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Ctx;
use super::ScenarioError;
use crate::metrics::tail_stats;
use crate::orchestrator::warehouse::{run_warehouse, LinkSetup, Method, Payloads, WarehouseSetup};
use crate::orchestrator::{
    correct_loop, offload_gate, validate_with, IntentContext, LoopBudget, OffloadDecision, RuleEngine,
};
use crate::planner::PlannerOptions;
use crate::radio::{McsTable, PathGainMap, SyntheticGain, DEFAULT_NOISE_DBM};
use crate::sensing::{payload_bytes, PayloadParams, SenseConfig};
use crate::world::{Cell, GridWorld, HumanTrack, RobotState, DEFAULT_FRAME_PERIOD_S};

const INTENT_ATTEMPTS: u32 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    pub id: u32,
    pub start: Cell,
    pub goal: Cell,
}

/// A scripted walker. With `patrol_cycles > 0` the waypoints are walked
/// forth and back that many times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanSpec {
    pub waypoints: Vec<Cell>,
    #[serde(default)]
    pub patrol_cycles: u32,
}

impl HumanSpec {
    fn expanded(&self) -> Vec<Cell> {
        if self.patrol_cycles == 0 || self.waypoints.len() < 2 {
            return self.waypoints.clone();
        }
        let mut out = vec![self.waypoints[0]];
        for _ in 0..self.patrol_cycles {
            out.extend_from_slice(&self.waypoints[1..]);
            out.extend(self.waypoints[..self.waypoints.len() - 1].iter().rev());
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GainSpec {
    Synthetic(SyntheticGain),
    Csv { path: String, shadowing_rho: f64, shadowing_sigma_db: f64 },
}

impl GainSpec {
    pub(crate) fn build(&self, world: &GridWorld, cx: &Ctx, field: &str) -> Result<PathGainMap, ScenarioError> {
        let map = match self {
            GainSpec::Synthetic(s) => PathGainMap::synthetic(world, s).map_err(|e| cx.invalid(field, e))?,
            GainSpec::Csv { path, shadowing_rho, shadowing_sigma_db } => {
                let text = cx.read(field, path)?;
                PathGainMap::from_csv(text.as_bytes(), *shadowing_rho, *shadowing_sigma_db)
                    .map_err(|e| cx.invalid(field, e))?
            }
        };
        if !map.matches(world) {
            return Err(cx.invalid(field, "gain map does not match the world"));
        }
        Ok(map)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayloadSpec {
    pub raw_bytes: u64,
    pub semantic_dim: u32,
    pub semantic_bits: u8,
}

fn default_traverse() -> f64 {
    1.4
}

fn default_horizon() -> u32 {
    2
}

fn default_noise() -> f64 {
    DEFAULT_NOISE_DBM
}

fn default_bler() -> f64 {
    0.1
}

fn default_stall() -> u32 {
    3
}

fn default_max_steps() -> u32 {
    500
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarehouseSpec {
    /// Text map: a `width height cell_size_m` header, then one row per line.
    pub map: Vec<String>,
    #[serde(default = "default_traverse")]
    pub cell_traverse_s: f64,
    pub robots: Vec<RobotSpec>,
    #[serde(default)]
    pub humans: Vec<HumanSpec>,
    #[serde(default)]
    pub human_start_jitter: u32,
    #[serde(default = "default_horizon")]
    pub forecast_horizon: u32,
    pub gain: GainSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent_text: Option<String>,
    /// Explicit orchestrator message; takes precedence over `intent_text`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    pub payloads: PayloadSpec,
    #[serde(default)]
    pub budget: LoopBudget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcs_table: Option<McsTable>,
    #[serde(default = "default_noise")]
    pub noise_dbm: f64,
    #[serde(default = "default_bler")]
    pub bler_target: f64,
    #[serde(default = "default_stall")]
    pub stall_replan_after: u32,
    #[serde(default = "default_max_steps")]
    pub max_steps: u32,
}

pub(crate) fn method(name: &str) -> Result<Method, String> {
    name.parse()
}

pub(crate) struct Resolved {
    setup: WarehouseSetup,
}

pub(crate) fn resolve(spec: &WarehouseSpec, cx: &Ctx) -> Result<Resolved, ScenarioError> {
    let world: GridWorld = spec.map.join("\n").parse().map_err(|e| cx.invalid("warehouse.map", e))?;
    let world = world
        .with_timing(DEFAULT_FRAME_PERIOD_S, spec.cell_traverse_s)
        .map_err(|e| cx.invalid("warehouse.cell_traverse_s", e))?;
    let robots: Vec<RobotState> = spec.robots.iter().map(|r| RobotState::new(r.id, r.start, r.goal)).collect();
    let ids: Vec<u32> = robots.iter().map(|r| r.id).collect();
    let humans = spec
        .humans
        .iter()
        .enumerate()
        .map(|(i, h)| {
            HumanTrack::new(h.expanded(), spec.forecast_horizon.max(1))
                .map_err(|e| cx.invalid(&format!("warehouse.humans[{i}]"), e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let gain_map = spec.gain.build(&world, cx, "warehouse.gain")?;

    let config = match (&spec.config, &spec.intent_text) {
        (Some(raw), _) => validate_with(&raw.to_string(), &ids).map_err(|errs| {
            let msg = errs.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
            cx.invalid("warehouse.config", msg)
        })?,
        (None, Some(text)) => {
            correct_loop(&mut RuleEngine, text, &IntentContext::for_robots(&ids), INTENT_ATTEMPTS).config
        }
        (None, None) => return Err(cx.invalid("warehouse", "one of intent_text or config is required")),
    };

    let semantic = SenseConfig::semantic(spec.payloads.semantic_dim, spec.payloads.semantic_bits, Default::default());
    let semantic_bytes =
        payload_bytes(&semantic, &PayloadParams::default()).map_err(|e| cx.invalid("warehouse.payloads", e))?;
    if !(spec.bler_target > 0.0 && spec.bler_target < 1.0) {
        return Err(cx.invalid("warehouse.bler_target", "must lie in (0, 1)"));
    }
    let setup = WarehouseSetup {
        world,
        robots,
        humans,
        human_start_jitter: spec.human_start_jitter,
        forecast_horizon: spec.forecast_horizon,
        gain_map,
        link: LinkSetup {
            noise_dbm: spec.noise_dbm,
            mcs: spec.mcs_table.clone().unwrap_or_else(McsTable::default_table),
            bler_target: spec.bler_target,
        },
        config,
        budget: spec.budget,
        payloads: Payloads { raw_bytes: spec.payloads.raw_bytes, semantic_bytes },
        stall_replan_after: spec.stall_replan_after.max(1),
        max_steps: spec.max_steps,
        planner: PlannerOptions::default(),
    };
    setup.validate().map_err(|e| cx.invalid("warehouse", e))?;
    Ok(Resolved { setup })
}

impl Resolved {
    pub(crate) fn run(&self, name: &str, seed: u64) -> Result<BTreeMap<String, f64>, String> {
        let m = method(name)?;
        let r = run_warehouse(&self.setup, m, seed).map_err(|e| e.to_string())?;
        let mut out = BTreeMap::new();
        out.insert("completion_time_s".to_string(), r.completion.max_s);
        for (id, t) in &r.completion.per_robot_s {
            out.insert(format!("completion_time_r{id}_s"), *t);
        }
        out.insert("finished".into(), if r.finished { 1.0 } else { 0.0 });
        out.insert("stop_events".into(), r.stops.count() as f64);
        let halt = r.stops.events.iter().fold(0.0, |acc, e| acc + e.duration_s);
        out.insert("halt_time_s".into(), halt);
        out.insert("link_failures".into(), r.counters.link_failures as f64);
        out.insert("late_commands".into(), r.counters.late_commands as f64);
        out.insert("plan_failures".into(), r.counters.plan_failures as f64);
        out.insert("human_halts".into(), r.counters.human_halts as f64);
        out.insert("detours".into(), r.counters.detours as f64);
        if let Ok(t) = tail_stats(&r.rtt_samples_s) {
            out.insert("rtt_mean_s".into(), t.mean);
            out.insert("rtt_p95_s".into(), t.p95);
        }
        if m != Method::StopAndGo && !r.uplink_samples_s.is_empty() {
            // Waiting time avoided by coordination, measured on the baseline.
            let baseline = run_warehouse(&self.setup, Method::StopAndGo, seed).map_err(|e| e.to_string())?;
            let t_wait = baseline.mean_halt_episode_s().unwrap_or(0.0);
            let compute = self.setup.budget.compute_s();
            let offload = r
                .uplink_samples_s
                .iter()
                .filter(|u| offload_gate(**u, compute, 0.0, t_wait) == OffloadDecision::Offload)
                .count();
            out.insert("t_wait_s".into(), t_wait);
            out.insert("offload_fraction".into(), offload as f64 / r.uplink_samples_s.len() as f64);
        }
        Ok(out)
    }
}
