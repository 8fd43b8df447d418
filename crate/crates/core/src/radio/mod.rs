//! Link budget, BLER/MCS models, HARQ transmission and bandwidth fairness.

mod fairness;
mod gainmap;
mod harq;
mod mcs;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fairness::allocate;
pub use gainmap::{sample_trace, DeadZone, PathGainMap, Shadowing, SyntheticGain, TraceParams};
pub use harq::{simulate_transmission, transmit_with_draws, TxOutcome, TxParams};
pub use mcs::{bler, select_mcs, McsChoice, McsEntry, McsTable};

pub const DEFAULT_NOISE_DBM: f64 = -100.0;
pub const DEFAULT_BANDWIDTH_HZ: f64 = 10e6;
pub const DEFAULT_MAX_POWER_DBM: f64 = 23.0;
pub const DEFAULT_TARGET_SNR_DB: f64 = 15.0;
pub const DEFAULT_MAX_RETX: u32 = 4;

#[derive(Debug, Error, PartialEq)]
pub enum RadioError {
    #[error("invalid MCS table: {0}")]
    InvalidTable(String),
    #[error("invalid radio config: {0}")]
    InvalidConfig(String),
    #[error("allocation failed: {0}")]
    Allocation(String),
    #[error("path-gain map: {0}")]
    Map(String),
}

/// Instantaneous link budget of one robot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub gain_db: f64,
    pub tx_power_dbm: f64,
    pub noise_dbm: f64,
    pub snr_db: f64,
    pub rssi_dbm: f64,
}

impl LinkState {
    pub fn new(gain_db: f64, tx_power_dbm: f64, noise_dbm: f64) -> Self {
        let rssi_dbm = tx_power_dbm + gain_db;
        Self { gain_db, tx_power_dbm, noise_dbm, snr_db: rssi_dbm - noise_dbm, rssi_dbm }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fairness {
    #[default]
    MaxMin,
    Proportional,
}

impl Fairness {
    pub fn as_str(self) -> &'static str {
        match self {
            Fairness::MaxMin => "max_min",
            Fairness::Proportional => "proportional",
        }
    }
}

/// Resource and power configuration set by the orchestrator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadioConfig {
    pub fairness: Fairness,
    pub priority_weights: Vec<f64>,
    pub target_snr_db: f64,
    pub max_power_dbm: f64,
    pub max_retx: u32,
}

impl RadioConfig {
    pub fn new(fairness: Fairness, priority_weights: Vec<f64>) -> Result<Self, RadioError> {
        let cfg = Self {
            fairness,
            priority_weights,
            target_snr_db: DEFAULT_TARGET_SNR_DB,
            max_power_dbm: DEFAULT_MAX_POWER_DBM,
            max_retx: DEFAULT_MAX_RETX,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn equal_weights(fairness: Fairness, robots: usize) -> Self {
        let n = robots.max(1);
        Self::new(fairness, vec![1.0 / n as f64; n]).expect("equal weights are valid")
    }

    pub fn validate(&self) -> Result<(), RadioError> {
        if self.priority_weights.is_empty() {
            return Err(RadioError::InvalidConfig("priority_weights is empty".into()));
        }
        if self.priority_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(RadioError::InvalidConfig("priority_weights must be finite and >= 0".into()));
        }
        let sum: f64 = self.priority_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(RadioError::InvalidConfig(format!("priority_weights sum {sum} != 1")));
        }
        if !self.target_snr_db.is_finite() || !self.max_power_dbm.is_finite() {
            return Err(RadioError::InvalidConfig("target_snr_db and max_power_dbm must be finite".into()));
        }
        Ok(())
    }
}

/// Transmit power setting returned by [`required_power`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerSetting {
    pub power_dbm: f64,
    pub achievable: bool,
}

/// Power needed to reach `target_snr_db` over a link with `gain_db`,
/// clamped to `max_power_dbm`.
pub fn required_power(gain_db: f64, noise_dbm: f64, target_snr_db: f64, max_power_dbm: f64) -> PowerSetting {
    let unclamped = target_snr_db + noise_dbm - gain_db;
    PowerSetting { power_dbm: unclamped.min(max_power_dbm), achievable: unclamped <= max_power_dbm }
}
