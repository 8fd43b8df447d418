use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::{Ctx, ScenarioError};
use crate::metrics::{tail_stats, utfr};
use crate::orchestrator::select_sense_mode;
use crate::radio::Shadowing;
use crate::sensing::{payload_bytes, PayloadParams, Qos, SenseConfig};

/// Name of the RSSI-driven switching policy.
pub const ORCHESTRATED: &str = "orchestrated";

/// Mean RSSI moves linearly from `start_dbm` to `end_dbm` over the run,
/// plus AR(1) fading sampled once per frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RssiTrace {
    pub start_dbm: f64,
    pub end_dbm: f64,
    pub fading_rho: f64,
    pub fading_sigma_db: f64,
}

/// Per-packet loss probability `1 / (1 + exp((rssi - mid_dbm) / scale_db))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossModel {
    pub mid_dbm: f64,
    pub scale_db: f64,
}

impl LossModel {
    fn at(&self, rssi: f64) -> f64 {
        1.0 / (1.0 + ((rssi - self.mid_dbm) / self.scale_db).exp())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedMethod {
    pub sense: SenseConfig,
    /// Overrides the payload derived from `payload_params`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_bytes: Option<u64>,
}

fn default_reevaluate() -> f64 {
    0.5
}

fn default_threshold() -> u64 {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FollowMeSpec {
    pub duration_s: f64,
    pub frame_period_s: f64,
    pub rssi: RssiTrace,
    /// `(rssi_dbm, Mbit/s)` points, interpolated linearly and clamped.
    pub capacity_mbps: Vec<[f64; 2]>,
    pub loss: LossModel,
    pub mtu_bytes: u32,
    pub base_latency_ms: f64,
    /// Mean of the exponential per-frame queueing jitter.
    pub jitter_ms: f64,
    pub reliable_rto_ms: f64,
    pub reliable_max_retries: u32,
    /// `[encode_ms, decode_ms]` per codec label such as `jpeg_q80`.
    pub codec_ms: BTreeMap<String, [f64; 2]>,
    /// Probability that a delivered frame yields a usable detection.
    pub detect_prob: BTreeMap<String, f64>,
    #[serde(default = "default_reevaluate")]
    pub reevaluate_s: f64,
    #[serde(default = "default_threshold")]
    pub loss_threshold_frames: u64,
    pub fixed_methods: BTreeMap<String, FixedMethod>,
    #[serde(default)]
    pub payload_params: PayloadParams,
}

pub(crate) struct Resolved {
    spec: FollowMeSpec,
}

fn ladder_configs() -> Vec<SenseConfig> {
    [-30.0, -40.0, -42.0, -44.0, -60.0].into_iter().map(select_sense_mode).collect()
}

pub(crate) fn resolve(spec: &FollowMeSpec, cx: &Ctx) -> Result<Resolved, ScenarioError> {
    let positive = [
        ("followme.duration_s", spec.duration_s),
        ("followme.frame_period_s", spec.frame_period_s),
        ("followme.loss.scale_db", spec.loss.scale_db),
        ("followme.reevaluate_s", spec.reevaluate_s),
    ];
    for (field, v) in positive {
        if !(v.is_finite() && v > 0.0) {
            return Err(cx.invalid(field, format!("must be > 0, got {v}")));
        }
    }
    if spec.mtu_bytes == 0 {
        return Err(cx.invalid("followme.mtu_bytes", "must be >= 1"));
    }
    if !(0.0..1.0).contains(&spec.rssi.fading_rho) || spec.rssi.fading_sigma_db < 0.0 {
        return Err(cx.invalid("followme.rssi", "fading_rho must lie in [0, 1) and fading_sigma_db >= 0"));
    }
    if spec.capacity_mbps.is_empty()
        || spec.capacity_mbps.windows(2).any(|w| w[0][0] >= w[1][0])
        || spec.capacity_mbps.iter().any(|p| !(p[1] > 0.0))
    {
        return Err(cx.invalid("followme.capacity_mbps", "points must have increasing RSSI and positive rate"));
    }
    for (label, p) in &spec.detect_prob {
        if !(0.0..=1.0).contains(p) {
            return Err(cx.invalid(&format!("followme.detect_prob.{label}"), "must lie in [0, 1]"));
        }
    }
    if spec.fixed_methods.contains_key(ORCHESTRATED) {
        return Err(cx.invalid("followme.fixed_methods", format!("{ORCHESTRATED:?} is reserved")));
    }
    let mut needed: Vec<(String, SenseConfig)> =
        ladder_configs().into_iter().map(|c| (ORCHESTRATED.into(), c)).collect();
    for (name, m) in &spec.fixed_methods {
        payload_bytes(&m.sense, &spec.payload_params)
            .map_err(|e| cx.invalid(&format!("followme.fixed_methods.{name}"), e))?;
        needed.push((name.clone(), m.sense.clone()));
    }
    for (name, cfg) in needed {
        let label = cfg.label();
        if !spec.codec_ms.contains_key(&label) || !spec.detect_prob.contains_key(&label) {
            return Err(cx.invalid(
                "followme.codec_ms",
                format!("method {name} needs codec_ms and detect_prob entries for {label}"),
            ));
        }
    }
    Ok(Resolved { spec: spec.clone() })
}

fn interpolate(points: &[[f64; 2]], x: f64) -> f64 {
    if x <= points[0][0] {
        return points[0][1];
    }
    for w in points.windows(2) {
        if x <= w[1][0] {
            let f = (x - w[0][0]) / (w[1][0] - w[0][0]);
            return w[0][1] + f * (w[1][1] - w[0][1]);
        }
    }
    points[points.len() - 1][1]
}

/// Outcome of pushing one frame over the link.
struct Delivery {
    comm_s: f64,
    delivered: bool,
}

impl Resolved {
    pub(crate) fn knows(&self, name: &str) -> bool {
        name == ORCHESTRATED || self.spec.fixed_methods.contains_key(name)
    }

    fn frames(&self) -> usize {
        (self.spec.duration_s / self.spec.frame_period_s).round().max(1.0) as usize
    }

    /// RSSI at every frame instant; shared by all methods on a seed.
    pub(crate) fn rssi_trace(&self, seed: u64) -> Vec<f64> {
        let s = &self.spec;
        let n = self.frames();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fading = Shadowing::stationary(s.rssi.fading_rho, s.rssi.fading_sigma_db, &mut rng);
        (0..n)
            .map(|k| {
                let f = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
                let fade = if k == 0 { fading.current() } else { fading.advance(&mut rng) };
                s.rssi.start_dbm + f * (s.rssi.end_dbm - s.rssi.start_dbm) + fade
            })
            .collect()
    }

    fn send<R: Rng>(&self, bytes: u64, qos: Qos, rssi: f64, rng: &mut R) -> Delivery {
        let s = &self.spec;
        let rate_bps = interpolate(&s.capacity_mbps, rssi) * 1e6;
        let p_loss = s.loss.at(rssi);
        let packets = bytes.div_ceil(s.mtu_bytes as u64).max(1);
        let packet_s = s.mtu_bytes as f64 * 8.0 / rate_bps;
        let jitter =
            if s.jitter_ms > 0.0 { Exp::new(1.0 / s.jitter_ms).expect("positive rate").sample(rng) } else { 0.0 };
        let mut comm_s = (s.base_latency_ms + jitter) / 1e3 + bytes as f64 * 8.0 / rate_bps;
        let mut delivered = true;
        for _ in 0..packets {
            match qos {
                Qos::BestEffort => {
                    if rng.random::<f64>() < p_loss {
                        delivered = false;
                    }
                }
                Qos::Reliable => {
                    let mut retries = 0;
                    while rng.random::<f64>() < p_loss {
                        retries += 1;
                        comm_s += packet_s + s.reliable_rto_ms / 1e3;
                        if retries > s.reliable_max_retries {
                            delivered = false;
                            break;
                        }
                    }
                    if !delivered {
                        break;
                    }
                }
            }
        }
        Delivery { comm_s, delivered }
    }

    pub(crate) fn run(&self, name: &str, seed: u64) -> Result<BTreeMap<String, f64>, String> {
        if !self.knows(name) {
            return Err(format!("unknown followme method {name:?}"));
        }
        let s = &self.spec;
        let rssi = self.rssi_trace(seed);
        let total = rssi.len() as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);

        let mut mode = select_sense_mode(rssi[0]);
        let mut next_eval = s.reevaluate_s;
        let mut busy_until = 0.0;
        let mut cta = Vec::new();
        let mut arrivals = Vec::new();
        let mut sent = 0u64;
        let mut sent_bytes = 0u64;
        let mut switches = 0u32;

        for (k, r) in rssi.iter().enumerate() {
            let capture = k as f64 * s.frame_period_s;
            if name == ORCHESTRATED && capture + 1e-12 >= next_eval {
                let m = select_sense_mode(*r);
                if m != mode {
                    switches += 1;
                    mode = m;
                }
                while next_eval <= capture + 1e-12 {
                    next_eval += s.reevaluate_s;
                }
            }
            if capture < busy_until {
                continue;
            }
            let (cfg, bytes) = if name == ORCHESTRATED {
                let b = payload_bytes(&mode, &s.payload_params).map_err(|e| e.to_string())?;
                (&mode, b)
            } else {
                let m = &s.fixed_methods[name];
                let b = match m.payload_bytes {
                    Some(b) => b,
                    None => payload_bytes(&m.sense, &s.payload_params).map_err(|e| e.to_string())?,
                };
                (&m.sense, b)
            };
            let label = cfg.label();
            let [enc_ms, dec_ms] = s.codec_ms[&label];
            let d = self.send(bytes, cfg.qos, *r, &mut rng);
            sent += 1;
            sent_bytes += bytes;
            busy_until = capture + enc_ms / 1e3 + d.comm_s;
            let detected = rng.random::<f64>() < s.detect_prob[&label];
            if d.delivered {
                let t = (enc_ms + dec_ms) / 1e3 + d.comm_s;
                cta.push(t);
                if detected {
                    let step = ((capture + t) / s.frame_period_s).ceil() as u64;
                    arrivals.push(step.min(total));
                }
            }
        }
        arrivals.sort_unstable();

        let mut out = BTreeMap::new();
        let stats = tail_stats(&cta).ok();
        out.insert("cta_mean_s".to_string(), stats.map_or(s.duration_s, |t| t.mean));
        out.insert("cta_std_s".to_string(), stats.map_or(0.0, |t| t.std));
        out.insert("cta_p95_s".to_string(), stats.map_or(s.duration_s, |t| t.p95));
        let u = utfr(&arrivals, s.loss_threshold_frames, total).map_err(|e| e.to_string())?;
        out.insert("utfr_pct".to_string(), u);
        out.insert("frames_sent".to_string(), sent as f64);
        out.insert("frames_delivered".to_string(), cta.len() as f64);
        out.insert("frames_tracked".to_string(), arrivals.len() as f64);
        out.insert("avg_payload_kb".to_string(), if sent == 0 { 0.0 } else { sent_bytes as f64 / sent as f64 / 1e3 });
        out.insert("mode_switches".to_string(), switches as f64);
        Ok(out)
    }
}
