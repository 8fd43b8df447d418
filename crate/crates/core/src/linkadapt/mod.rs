//! MCS selection policies under delayed channel feedback.
//!
//! Every policy is scored against the true SNR of the trace with the same
//! per-step retransmission draws, so differences between policies come only
//! from the MCS they pick.

mod predictor;

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::radio::{bler, select_mcs, transmit_with_draws, LinkState, McsTable, TxParams};

pub use predictor::{predict_snr, PredictContext, Predictor, SnrPredictor};

pub const DEFAULT_BLER_TARGET: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum LinkAdaptError {
    #[error("SNR history is empty")]
    EmptyHistory,
    #[error("missing predictor context: {0}")]
    MissingContext(&'static str),
    #[error("trace has {len} steps, policy needs at least {needed}")]
    TraceTooShort { len: usize, needed: usize },
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("baseline mean {0} is zero")]
    ZeroBaseline(&'static str),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("trace csv: {0}")]
    Csv(String),
}

/// MCS policy family.
#[derive(Clone, Debug)]
pub enum PolicySpec {
    /// Knows the true SNR and the retransmission draws of each step.
    Oracle,
    /// Uses the true instantaneous SNR.
    Ideal,
    /// Uses the SNR measured `d` steps ago.
    Delayed(u32),
    /// Forecasts the current SNR from feedback that is `lookahead` steps old.
    Predictive { predictor: Predictor, lookahead: u32 },
}

impl PolicySpec {
    pub fn delayed(d: u32) -> Result<Self, LinkAdaptError> {
        if d == 0 {
            return Err(LinkAdaptError::InvalidPolicy("delay must be >= 1".into()));
        }
        Ok(PolicySpec::Delayed(d))
    }

    /// Map-aware forecaster with one step of feedback delay.
    pub fn predictive() -> Self {
        PolicySpec::Predictive { predictor: Predictor::MapAware, lookahead: 1 }
    }

    fn max_delay(&self) -> usize {
        match self {
            PolicySpec::Delayed(d) => *d as usize,
            PolicySpec::Predictive { lookahead, .. } => *lookahead as usize,
            _ => 0,
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Oracle => write!(f, "oracle"),
            PolicySpec::Ideal => write!(f, "ideal"),
            PolicySpec::Delayed(d) => write!(f, "delayed{d}"),
            PolicySpec::Predictive { predictor, lookahead } => {
                write!(f, "predictive")?;
                if !matches!(predictor, Predictor::MapAware) {
                    write!(f, "_{}", predictor.name())?;
                }
                if *lookahead != 1 {
                    write!(f, "_d{lookahead}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for PolicySpec {
    type Err = LinkAdaptError;

    /// Accepts `oracle`, `ideal`, `delayedN`, `predictive`,
    /// `predictive_last_value`, `predictive_linearW`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || LinkAdaptError::InvalidPolicy(s.to_string());
        match s {
            "oracle" => Ok(PolicySpec::Oracle),
            "ideal" => Ok(PolicySpec::Ideal),
            "predictive" => Ok(PolicySpec::predictive()),
            "predictive_last_value" => Ok(PolicySpec::Predictive { predictor: Predictor::LastValue, lookahead: 1 }),
            _ => {
                if let Some(d) = s.strip_prefix("delayed") {
                    return PolicySpec::delayed(d.parse().map_err(|_| bad())?);
                }
                if let Some(w) = s.strip_prefix("predictive_linear") {
                    let window = w.parse().map_err(|_| bad())?;
                    return Ok(PolicySpec::Predictive { predictor: Predictor::Linear { window }, lookahead: 1 });
                }
                Err(bad())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOptions {
    pub bler_target: f64,
    pub max_retx: u32,
    /// The oracle idles in steps whose best feasible rate (bps/Hz) is below
    /// this; 0 disables skipping.
    pub skip_threshold_bps_per_hz: f64,
    pub seed: u64,
}

impl Default for PolicyOptions {
    fn default() -> Self {
        Self { bler_target: DEFAULT_BLER_TARGET, max_retx: 4, skip_threshold_bps_per_hz: 0.0, seed: 0 }
    }
}

/// Link states along a route and, when known, the map-implied SNR
/// (shadowing-free) at each step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinkTrace {
    pub states: Vec<LinkState>,
    pub map_snr_db: Option<Vec<f64>>,
}

impl LinkTrace {
    pub fn snr(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.snr_db).collect()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyStep {
    /// Index of the chosen MCS entry, `None` when the step was skipped.
    pub mcs: Option<u32>,
    pub snr_hat_db: f64,
    pub throughput_bps: f64,
    pub latency_s: f64,
    /// BLER of the chosen MCS at the true SNR.
    pub bler_realized: f64,
    pub success: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyTimeSeries {
    pub policy: String,
    pub steps: Vec<PolicyStep>,
}

impl PolicyTimeSeries {
    pub fn mean_throughput(&self) -> f64 {
        mean(self.steps.iter().map(|s| s.throughput_bps))
    }

    pub fn mean_latency(&self) -> f64 {
        mean(self.steps.iter().filter(|s| s.mcs.is_some()).map(|s| s.latency_s))
    }

    /// Share of transmitted steps whose realized BLER is at most `level`.
    pub fn bler_mass_at_or_below(&self, level: f64) -> f64 {
        let sent: Vec<_> = self.steps.iter().filter(|s| s.mcs.is_some()).collect();
        if sent.is_empty() {
            return 1.0;
        }
        sent.iter().filter(|s| s.bler_realized <= level).count() as f64 / sent.len() as f64
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Evaluates `spec` on `trace`, sending `payload_bytes` every step.
pub fn run_policy(
    trace: &LinkTrace,
    spec: &PolicySpec,
    table: &McsTable,
    payload_bytes: u64,
    opts: &PolicyOptions,
) -> Result<PolicyTimeSeries, LinkAdaptError> {
    let needed = spec.max_delay().max(1);
    if trace.len() < needed {
        return Err(LinkAdaptError::TraceTooShort { len: trace.len(), needed });
    }
    if let Some(m) = &trace.map_snr_db {
        if m.len() != trace.len() {
            return Err(LinkAdaptError::LengthMismatch(m.len(), trace.len()));
        }
    }
    let snr = trace.snr();
    let params = TxParams::from_table(table, Some(opts.max_retx));
    let bits = payload_bytes as f64 * 8.0;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut draws = vec![0.0; opts.max_retx as usize + 1];
    let mut steps = Vec::with_capacity(trace.len());

    for t in 0..trace.len() {
        for d in draws.iter_mut() {
            *d = rng.random::<f64>();
        }
        let truth = snr[t];
        let score = |pos: usize| {
            let entry = table.entry(pos);
            let mut k = 0;
            let out = transmit_with_draws(payload_bytes, entry, &[truth], &params, || {
                k += 1;
                draws[k - 1]
            });
            let tp = if out.success && out.latency_s > 0.0 { bits / out.latency_s } else { 0.0 };
            PolicyStep {
                mcs: Some(entry.index),
                snr_hat_db: truth,
                throughput_bps: tp,
                latency_s: out.latency_s,
                bler_realized: bler(entry, truth),
                success: out.success,
            }
        };

        let step = match spec {
            PolicySpec::Oracle => {
                let feasible = select_mcs(table, truth, opts.bler_target);
                let best_rate = if feasible.feasible { table.entry(feasible.position).rate_bps_per_hz } else { 0.0 };
                if best_rate < opts.skip_threshold_bps_per_hz {
                    PolicyStep {
                        mcs: None,
                        snr_hat_db: truth,
                        throughput_bps: 0.0,
                        latency_s: 0.0,
                        bler_realized: 0.0,
                        success: false,
                    }
                } else {
                    (0..table.entries().len())
                        .map(score)
                        .reduce(|best, s| {
                            let better = s.throughput_bps > best.throughput_bps
                                || (s.throughput_bps == best.throughput_bps && s.latency_s < best.latency_s);
                            if better {
                                s
                            } else {
                                best
                            }
                        })
                        .expect("table is non-empty")
                }
            }
            _ => {
                let hat = estimate(spec, &snr, trace.map_snr_db.as_deref(), t)?;
                let mut s = score(select_mcs(table, hat, opts.bler_target).position);
                s.snr_hat_db = hat;
                s
            }
        };
        steps.push(step);
    }
    Ok(PolicyTimeSeries { policy: spec.to_string(), steps })
}

fn estimate(spec: &PolicySpec, snr: &[f64], map_snr: Option<&[f64]>, t: usize) -> Result<f64, LinkAdaptError> {
    match spec {
        PolicySpec::Oracle | PolicySpec::Ideal => Ok(snr[t]),
        PolicySpec::Delayed(d) => Ok(snr[t.saturating_sub(*d as usize)]),
        PolicySpec::Predictive { predictor, lookahead } => {
            let newest = t.saturating_sub(*lookahead as usize);
            let ctx = PredictContext {
                lookahead: (t - newest) as u32,
                map_snr_now_db: map_snr.map(|m| m[newest]),
                map_snr_ahead_db: map_snr.map(|m| m[t]),
            };
            predict_snr(predictor, &snr[..=newest], &ctx)
        }
    }
}

/// Relative improvement of `prop` over `base`, in percent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub tp_gain_pct: f64,
    pub lat_reduction_pct: f64,
}

pub fn gains(prop: &PolicyTimeSeries, base: &PolicyTimeSeries) -> Result<Gains, LinkAdaptError> {
    if prop.steps.len() != base.steps.len() {
        return Err(LinkAdaptError::LengthMismatch(prop.steps.len(), base.steps.len()));
    }
    gains_from_means(prop.mean_throughput(), base.mean_throughput(), prop.mean_latency(), base.mean_latency())
}

pub fn gains_from_means(tp_prop: f64, tp_base: f64, lat_prop: f64, lat_base: f64) -> Result<Gains, LinkAdaptError> {
    if tp_base == 0.0 {
        return Err(LinkAdaptError::ZeroBaseline("throughput"));
    }
    if lat_base == 0.0 {
        return Err(LinkAdaptError::ZeroBaseline("latency"));
    }
    Ok(Gains {
        tp_gain_pct: 100.0 * (tp_prop - tp_base) / tp_base,
        lat_reduction_pct: 100.0 * (lat_base - lat_prop) / lat_base,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrBin {
    pub lo_db: f64,
    pub hi_db: f64,
    pub count: usize,
    pub mean_throughput_bps: Option<f64>,
    pub mean_latency_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrStats {
    pub bins: Vec<SnrBin>,
    /// Realized BLER of transmitted steps, ascending.
    pub bler_sorted: Vec<f64>,
}

impl SnrStats {
    /// Nearest-rank quantile of the realized BLER, `None` if nothing was sent.
    pub fn bler_quantile(&self, p: f64) -> Option<f64> {
        let n = self.bler_sorted.len();
        if n == 0 {
            return None;
        }
        let rank = ((p.clamp(0.0, 1.0) * n as f64).ceil() as usize).clamp(1, n);
        Some(self.bler_sorted[rank - 1])
    }

    /// Empirical CDF of realized BLER at `level`.
    pub fn bler_cdf(&self, level: f64) -> f64 {
        if self.bler_sorted.is_empty() {
            return 1.0;
        }
        self.bler_sorted.partition_point(|b| *b <= level) as f64 / self.bler_sorted.len() as f64
    }
}

/// Groups steps into SNR bins `[edges[i], edges[i+1])` by the true SNR.
pub fn snr_conditioned_stats(
    series: &PolicyTimeSeries,
    snr_db: &[f64],
    edges: &[f64],
) -> Result<SnrStats, LinkAdaptError> {
    if series.steps.len() != snr_db.len() {
        return Err(LinkAdaptError::LengthMismatch(series.steps.len(), snr_db.len()));
    }
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(LinkAdaptError::InvalidPolicy("bin edges must be strictly increasing".into()));
    }
    let bins = edges
        .windows(2)
        .map(|w| {
            let members: Vec<&PolicyStep> =
                series.steps.iter().zip(snr_db).filter(|(_, s)| **s >= w[0] && **s < w[1]).map(|(p, _)| p).collect();
            let sent: Vec<&&PolicyStep> = members.iter().filter(|p| p.mcs.is_some()).collect();
            SnrBin {
                lo_db: w[0],
                hi_db: w[1],
                count: members.len(),
                mean_throughput_bps: (!members.is_empty()).then(|| mean(members.iter().map(|p| p.throughput_bps))),
                mean_latency_s: (!sent.is_empty()).then(|| mean(sent.iter().map(|p| p.latency_s))),
            }
        })
        .collect();
    let mut bler_sorted: Vec<f64> = series.steps.iter().filter(|s| s.mcs.is_some()).map(|s| s.bler_realized).collect();
    bler_sorted.sort_by(f64::total_cmp);
    Ok(SnrStats { bins, bler_sorted })
}

#[derive(Serialize, Deserialize)]
struct TraceRow {
    step: usize,
    gain_db: f64,
    snr_db: f64,
}

pub fn write_trace_csv<W: Write>(states: &[LinkState], writer: W) -> Result<(), LinkAdaptError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for (step, s) in states.iter().enumerate() {
        wtr.serialize(TraceRow { step, gain_db: s.gain_db, snr_db: s.snr_db })
            .map_err(|e| LinkAdaptError::Csv(e.to_string()))?;
    }
    wtr.flush().map_err(|e| LinkAdaptError::Csv(e.to_string()))
}

/// Reads a `step,gain_db,snr_db` trace; transmit power is recovered from
/// the SNR and `noise_dbm`.
pub fn read_trace_csv<R: Read>(reader: R, noise_dbm: f64) -> Result<Vec<LinkState>, LinkAdaptError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<TraceRow>().enumerate() {
        let row = row.map_err(|e| LinkAdaptError::Csv(e.to_string()))?;
        if row.step != i {
            return Err(LinkAdaptError::Csv(format!("expected step {i}, found {}", row.step)));
        }
        out.push(LinkState::new(row.gain_db, row.snr_db - row.gain_db + noise_dbm, noise_dbm));
    }
    Ok(out)
}
