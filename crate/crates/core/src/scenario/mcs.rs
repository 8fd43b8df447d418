use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::warehouse::GainSpec;
use super::{Ctx, ScenarioError};
use crate::linkadapt::{run_policy, LinkTrace, PolicyOptions, PolicySpec};
use crate::radio::{sample_trace, McsTable, PathGainMap, TraceParams, DEFAULT_MAX_POWER_DBM, DEFAULT_NOISE_DBM};
use crate::world::{Cell, GridWorld};

fn default_power() -> f64 {
    DEFAULT_MAX_POWER_DBM
}

fn default_noise() -> f64 {
    DEFAULT_NOISE_DBM
}

fn default_bler() -> f64 {
    0.1
}

fn default_retx() -> u32 {
    4
}

/// A robot walks `route` forth and back, `steps_per_cell` link steps per
/// cell, for `steps` steps; the link sees the map gain of its cell plus
/// AR(1) shadowing at fixed transmit power.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McsSpec {
    pub map: Vec<String>,
    pub gain: GainSpec,
    pub route: Vec<Cell>,
    pub steps_per_cell: u32,
    pub steps: usize,
    pub payload_bytes: u64,
    #[serde(default = "default_power")]
    pub tx_power_dbm: f64,
    #[serde(default = "default_noise")]
    pub noise_dbm: f64,
    #[serde(default = "default_bler")]
    pub bler_target: f64,
    #[serde(default = "default_retx")]
    pub max_retx: u32,
    #[serde(default)]
    pub skip_threshold_bps_per_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcs_table: Option<McsTable>,
}

pub(crate) fn method(name: &str) -> Result<PolicySpec, String> {
    name.parse::<PolicySpec>().map_err(|e| e.to_string())
}

pub(crate) struct Resolved {
    spec: McsSpec,
    map: PathGainMap,
    cells: Vec<Cell>,
    map_snr_db: Vec<f64>,
    table: McsTable,
}

pub(crate) fn resolve(spec: &McsSpec, cx: &Ctx) -> Result<Resolved, ScenarioError> {
    let world: GridWorld = spec.map.join("\n").parse().map_err(|e| cx.invalid("mcs.map", e))?;
    let map = spec.gain.build(&world, cx, "mcs.gain")?;
    if spec.route.is_empty() {
        return Err(cx.invalid("mcs.route", "must not be empty"));
    }
    for (i, c) in spec.route.iter().enumerate() {
        world.check_free(*c).map_err(|e| cx.invalid(&format!("mcs.route[{i}]"), e))?;
    }
    if let Some(w) = spec.route.windows(2).find(|w| !w[0].is_adjacent_or_same(w[1])) {
        return Err(cx.invalid("mcs.route", format!("{} and {} are not adjacent", w[0], w[1])));
    }
    if spec.steps_per_cell == 0 || spec.steps == 0 {
        return Err(cx.invalid("mcs", "steps and steps_per_cell must be >= 1"));
    }
    if !(spec.bler_target > 0.0 && spec.bler_target < 1.0) {
        return Err(cx.invalid("mcs.bler_target", "must lie in (0, 1)"));
    }
    let mut cycle = spec.route.clone();
    if cycle.len() > 2 {
        cycle.extend(spec.route[1..spec.route.len() - 1].iter().rev());
    } else if cycle.len() == 2 {
        cycle.push(spec.route[1]);
        cycle.push(spec.route[0]);
    }
    let cells: Vec<Cell> = (0..spec.steps).map(|t| cycle[(t / spec.steps_per_cell as usize) % cycle.len()]).collect();
    let map_snr_db = cells
        .iter()
        .map(|c| spec.tx_power_dbm + map.gain_at(*c).expect("route cells are free") - spec.noise_dbm)
        .collect();
    Ok(Resolved {
        spec: spec.clone(),
        map,
        cells,
        map_snr_db,
        table: spec.mcs_table.clone().unwrap_or_else(McsTable::default_table),
    })
}

impl Resolved {
    pub(crate) fn trace(&self, seed: u64) -> Result<LinkTrace, String> {
        let params = TraceParams { tx_power_dbm: self.spec.tx_power_dbm, noise_dbm: self.spec.noise_dbm };
        let states = sample_trace(&self.map, &self.cells, &params, seed).map_err(|e| e.to_string())?;
        Ok(LinkTrace { states, map_snr_db: Some(self.map_snr_db.clone()) })
    }

    pub(crate) fn run(&self, name: &str, seed: u64) -> Result<BTreeMap<String, f64>, String> {
        let spec = method(name)?;
        let trace = self.trace(seed)?;
        let opts = PolicyOptions {
            bler_target: self.spec.bler_target,
            max_retx: self.spec.max_retx,
            skip_threshold_bps_per_hz: self.spec.skip_threshold_bps_per_hz,
            // HARQ draws are shared by every policy on the same seed.
            seed: seed ^ 0x5eed_4a9c,
        };
        let ts = run_policy(&trace, &spec, &self.table, self.spec.payload_bytes, &opts).map_err(|e| e.to_string())?;
        let sent = ts.steps.iter().filter(|s| s.mcs.is_some()).count();
        let ok = ts.steps.iter().filter(|s| s.success).count();
        let mut out = BTreeMap::new();
        out.insert("throughput_bps".to_string(), ts.mean_throughput());
        out.insert("latency_s".to_string(), ts.mean_latency());
        out.insert("bler_mass_at_target".to_string(), ts.bler_mass_at_or_below(self.spec.bler_target));
        out.insert("success_rate".to_string(), if sent == 0 { 0.0 } else { ok as f64 / sent as f64 });
        out.insert("mean_snr_db".to_string(), trace.snr().iter().sum::<f64>() / trace.len() as f64);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use super::*;
    use crate::radio::SyntheticGain;

    fn spec() -> McsSpec {
        McsSpec {
            map: vec!["4 1 2.0".into(), "....".into()],
            gain: GainSpec::Synthetic(SyntheticGain {
                access_points: vec![Cell::new(0, 0)],
                ref_gain_db: -60.0,
                exponent: 2.0,
                dead_zones: vec![],
                shadowing_rho: 0.9,
                shadowing_sigma_db: 2.0,
            }),
            route: vec![Cell::new(1, 0), Cell::new(2, 0), Cell::new(3, 0)],
            steps_per_cell: 2,
            steps: 12,
            payload_bytes: 1000,
            tx_power_dbm: 0.0,
            noise_dbm: -100.0,
            bler_target: 0.1,
            max_retx: 4,
            skip_threshold_bps_per_hz: 0.0,
            mcs_table: None,
        }
    }

    fn cx() -> Ctx<'static> {
        Ctx { file: "m.json", base_dir: Path::new(".") }
    }

    #[test]
    fn route_walks_forth_and_back() {
        let r = resolve(&spec(), &cx()).unwrap();
        let xs: Vec<i32> = r.cells.iter().map(|c| c.x).collect();
        assert_eq!(xs, [1, 1, 2, 2, 3, 3, 2, 2, 1, 1, 2, 2]);
    }

    #[test]
    fn policies_share_the_trace() {
        let r = resolve(&spec(), &cx()).unwrap();
        let a = r.run("ideal", 4).unwrap();
        let b = r.run("delayed3", 4).unwrap();
        assert_eq!(a["mean_snr_db"], b["mean_snr_db"]);
        let o = r.run("oracle", 4).unwrap();
        assert!(o["throughput_bps"] >= a["throughput_bps"]);
        assert!(r.run("delayed0", 4).is_err());
    }

    #[test]
    fn bad_routes_are_rejected() {
        let mut s = spec();
        s.route = vec![Cell::new(0, 0), Cell::new(2, 0)];
        assert!(resolve(&s, &cx()).err().unwrap().to_string().contains("not adjacent"));
        let mut s = spec();
        s.route.clear();
        assert!(resolve(&s, &cx()).is_err());
    }
}
