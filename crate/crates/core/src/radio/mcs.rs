use serde::{Deserialize, Serialize};

use super::{RadioError, DEFAULT_BANDWIDTH_HZ};

/// One modulation-and-coding scheme with a logistic BLER waterfall.
///
/// `slope_per_db == f64::INFINITY` encodes a hard step at the threshold; in
/// serialized form a missing or `null` slope means the same.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McsEntry {
    pub index: u32,
    pub rate_bps_per_hz: f64,
    pub snr_threshold_db: f64,
    #[serde(with = "slope_serde", default = "step_slope")]
    pub slope_per_db: f64,
}

fn step_slope() -> f64 {
    f64::INFINITY
}

mod slope_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl McsEntry {
    pub fn logistic(index: u32, rate: f64, threshold_db: f64, slope_per_db: f64) -> Self {
        Self { index, rate_bps_per_hz: rate, snr_threshold_db: threshold_db, slope_per_db }
    }

    pub fn step(index: u32, rate: f64, threshold_db: f64) -> Self {
        Self::logistic(index, rate, threshold_db, f64::INFINITY)
    }
}

/// Block error probability of `entry` at `snr_db`:
/// `1 / (1 + exp(k (snr - threshold)))`, or a hard step when `k` is infinite.
pub fn bler(entry: &McsEntry, snr_db: f64) -> f64 {
    let margin = snr_db - entry.snr_threshold_db;
    if entry.slope_per_db.is_infinite() {
        return if margin >= 0.0 { 0.0 } else { 1.0 };
    }
    (1.0 / (1.0 + (entry.slope_per_db * margin).exp())).clamp(0.0, 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct McsTable {
    entries: Vec<McsEntry>,
    bandwidth_hz: f64,
    slot_s: f64,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    entries: Vec<McsEntry>,
    bandwidth_hz: f64,
    slot_s: f64,
}

impl TryFrom<RawTable> for McsTable {
    type Error = RadioError;

    fn try_from(raw: RawTable) -> Result<Self, Self::Error> {
        McsTable::new(raw.entries, raw.bandwidth_hz, raw.slot_s)
    }
}

impl From<McsTable> for RawTable {
    fn from(t: McsTable) -> Self {
        RawTable { entries: t.entries, bandwidth_hz: t.bandwidth_hz, slot_s: t.slot_s }
    }
}

impl McsTable {
    pub fn new(entries: Vec<McsEntry>, bandwidth_hz: f64, slot_s: f64) -> Result<Self, RadioError> {
        if entries.is_empty() {
            return Err(RadioError::InvalidTable("no entries".into()));
        }
        for w in entries.windows(2) {
            if w[1].rate_bps_per_hz <= w[0].rate_bps_per_hz {
                return Err(RadioError::InvalidTable(format!(
                    "rates must strictly increase (entry {} -> {})",
                    w[0].index, w[1].index
                )));
            }
            if w[1].snr_threshold_db < w[0].snr_threshold_db {
                return Err(RadioError::InvalidTable(format!(
                    "thresholds must not decrease (entry {} -> {})",
                    w[0].index, w[1].index
                )));
            }
        }
        if entries.iter().any(|e| !(e.slope_per_db > 0.0) || !(e.rate_bps_per_hz > 0.0)) {
            return Err(RadioError::InvalidTable("rates and slopes must be > 0".into()));
        }
        if !(bandwidth_hz > 0.0 && bandwidth_hz.is_finite()) || !(slot_s >= 0.0 && slot_s.is_finite()) {
            return Err(RadioError::InvalidTable("bandwidth must be > 0 and slot >= 0".into()));
        }
        Ok(Self { entries, bandwidth_hz, slot_s })
    }

    /// Eight logistic entries, 0.5 to 6.0 bps/Hz, thresholds evenly spaced
    /// from -2 to 22 dB, slope 1.5 per dB, on a 10 MHz carrier with 1 ms slots.
    pub fn default_table() -> Self {
        const RATES: [f64; 8] = [0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0];
        let entries = RATES
            .iter()
            .enumerate()
            .map(|(i, &r)| McsEntry::logistic(i as u32, r, -2.0 + 24.0 * i as f64 / 7.0, 1.5))
            .collect();
        Self::new(entries, DEFAULT_BANDWIDTH_HZ, 1e-3).expect("default table is valid")
    }

    pub fn entries(&self) -> &[McsEntry] {
        &self.entries
    }

    pub fn entry(&self, position: usize) -> &McsEntry {
        &self.entries[position]
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
    }

    pub fn slot_s(&self) -> f64 {
        self.slot_s
    }
}

/// Outcome of [`select_mcs`]: the chosen table position and whether any
/// entry met the BLER target.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct McsChoice {
    pub position: usize,
    pub feasible: bool,
}

/// Highest-rate entry whose BLER at `snr_hat_db` is within `bler_target`.
/// When none qualifies the most robust entry is returned, flagged infeasible.
pub fn select_mcs(table: &McsTable, snr_hat_db: f64, bler_target: f64) -> McsChoice {
    table
        .entries
        .iter()
        .rposition(|e| bler(e, snr_hat_db) <= bler_target)
        .map(|position| McsChoice { position, feasible: true })
        .unwrap_or(McsChoice { position: 0, feasible: false })
}
