use std::fmt;
use std::sync::Arc;

use super::LinkAdaptError;
use crate::radio::PathGainMap;
use crate::world::Cell;

/// Side information for a prediction made `lookahead` steps ahead of the
/// newest history sample.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PredictContext {
    pub lookahead: u32,
    /// Map-implied SNR (no shadowing) where the newest sample was taken.
    pub map_snr_now_db: Option<f64>,
    /// Map-implied SNR at the cell occupied `lookahead` steps later.
    pub map_snr_ahead_db: Option<f64>,
}

impl PredictContext {
    pub fn blind(lookahead: u32) -> Self {
        Self { lookahead, ..Default::default() }
    }

    /// Context for an agent at `cell` moving `velocity` cells per step,
    /// looked up in `map` at fixed transmit power and noise.
    pub fn from_motion(
        map: &PathGainMap,
        cell: Cell,
        velocity: (i32, i32),
        lookahead: u32,
        tx_power_dbm: f64,
        noise_dbm: f64,
    ) -> Self {
        let d = lookahead as i32;
        let ahead = Cell::new(cell.x + velocity.0 * d, cell.y + velocity.1 * d);
        let snr = |c: Cell| map.gain_at(c).map(|g| g + tx_power_dbm - noise_dbm);
        Self { lookahead, map_snr_now_db: snr(cell), map_snr_ahead_db: snr(ahead).or(snr(cell)) }
    }
}

/// Pluggable SNR forecaster.
pub trait SnrPredictor: Send + Sync {
    fn name(&self) -> &str;
    fn predict(&self, history: &[f64], ctx: &PredictContext) -> Result<f64, LinkAdaptError>;
}

#[derive(Clone)]
pub enum Predictor {
    LastValue,
    Linear { window: usize },
    MapAware,
    External(Arc<dyn SnrPredictor>),
}

impl fmt::Debug for Predictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predictor::LastValue => write!(f, "LastValue"),
            Predictor::Linear { window } => write!(f, "Linear {{ window: {window} }}"),
            Predictor::MapAware => write!(f, "MapAware"),
            Predictor::External(p) => write!(f, "External({})", p.name()),
        }
    }
}

impl Predictor {
    pub fn name(&self) -> String {
        match self {
            Predictor::LastValue => "last_value".into(),
            Predictor::Linear { window } => format!("linear{window}"),
            Predictor::MapAware => "map_aware".into(),
            Predictor::External(p) => p.name().into(),
        }
    }
}

/// Forecasts the SNR `ctx.lookahead` steps after the last `history` sample.
pub fn predict_snr(predictor: &Predictor, history: &[f64], ctx: &PredictContext) -> Result<f64, LinkAdaptError> {
    let last = *history.last().ok_or(LinkAdaptError::EmptyHistory)?;
    match predictor {
        Predictor::LastValue => Ok(last),
        Predictor::Linear { window } => Ok(linear_extrapolate(history, (*window).max(1), ctx.lookahead)),
        Predictor::MapAware => match (ctx.map_snr_now_db, ctx.map_snr_ahead_db) {
            (Some(now), Some(ahead)) => Ok(ahead + (last - now)),
            _ => Err(LinkAdaptError::MissingContext("map_aware needs map SNR")),
        },
        Predictor::External(p) => p.predict(history, ctx),
    }
}

/// Least-squares line through the last `window` samples, evaluated
/// `lookahead` steps past the newest one.
fn linear_extrapolate(history: &[f64], window: usize, lookahead: u32) -> f64 {
    let tail = &history[history.len().saturating_sub(window)..];
    let n = tail.len() as f64;
    if tail.len() < 2 {
        return tail[0];
    }
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = tail.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in tail.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    mean_y + slope * (n - 1.0 + lookahead as f64 - mean_x)
}
