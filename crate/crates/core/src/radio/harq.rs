use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mcs::{bler, McsEntry, McsTable};

/// Hard stop for unbounded retransmission when every attempt fails.
const UNBOUNDED_ATTEMPT_CAP: u32 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TxParams {
    pub bandwidth_hz: f64,
    pub slot_s: f64,
    /// `None` retransmits until success.
    pub max_retx: Option<u32>,
}

impl TxParams {
    pub fn from_table(table: &McsTable, max_retx: Option<u32>) -> Self {
        Self { bandwidth_hz: table.bandwidth_hz(), slot_s: table.slot_s(), max_retx }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TxOutcome {
    pub latency_s: f64,
    pub success: bool,
    pub attempts: u32,
}

/// Air time of one attempt: `payload_bits / (rate * bandwidth) + slot`.
pub fn attempt_time(payload_bytes: u64, entry: &McsEntry, params: &TxParams) -> f64 {
    (payload_bytes as f64 * 8.0) / (entry.rate_bps_per_hz * params.bandwidth_hz) + params.slot_s
}

/// HARQ transmission driven by explicit uniforms in `[0, 1)`. Attempt `k`
/// sees `snr_db[min(k, len - 1)]` and fails when its draw is below the BLER.
pub fn transmit_with_draws(
    payload_bytes: u64,
    entry: &McsEntry,
    snr_db: &[f64],
    params: &TxParams,
    mut draw: impl FnMut() -> f64,
) -> TxOutcome {
    assert!(!snr_db.is_empty(), "at least one SNR sample is required");
    let per_attempt = attempt_time(payload_bytes, entry, params);
    let max_attempts = params.max_retx.map_or(UNBOUNDED_ATTEMPT_CAP, |r| r.saturating_add(1));
    let mut attempts = 0;
    while attempts < max_attempts {
        let snr = snr_db[(attempts as usize).min(snr_db.len() - 1)];
        attempts += 1;
        if draw() >= bler(entry, snr) {
            return TxOutcome { latency_s: attempts as f64 * per_attempt, success: true, attempts };
        }
    }
    TxOutcome { latency_s: attempts as f64 * per_attempt, success: false, attempts }
}

pub fn simulate_transmission<R: Rng + ?Sized>(
    payload_bytes: u64,
    entry: &McsEntry,
    snr_db: &[f64],
    params: &TxParams,
    rng: &mut R,
) -> TxOutcome {
    transmit_with_draws(payload_bytes, entry, snr_db, params, || rng.random::<f64>())
}
