use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{LinkState, RadioError, DEFAULT_MAX_POWER_DBM, DEFAULT_NOISE_DBM};
use crate::world::{Cell, GridWorld};

/// Per-cell uplink path gain in dB with an AR(1) shadowing model.
/// Blocked cells hold NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct PathGainMap {
    width: u32,
    height: u32,
    gains: Vec<f64>,
    shadowing_rho: f64,
    shadowing_sigma_db: f64,
}

/// Rectangular region with extra attenuation, bounds inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeadZone {
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
    pub loss_db: f64,
}

impl DeadZone {
    pub fn contains(&self, c: Cell) -> bool {
        (self.x0..=self.x1).contains(&c.x) && (self.y0..=self.y1).contains(&c.y)
    }
}

/// Log-distance path loss from the strongest access point, minus dead-zone
/// losses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticGain {
    pub access_points: Vec<Cell>,
    pub ref_gain_db: f64,
    pub exponent: f64,
    #[serde(default)]
    pub dead_zones: Vec<DeadZone>,
    #[serde(default)]
    pub shadowing_rho: f64,
    #[serde(default)]
    pub shadowing_sigma_db: f64,
}

impl PathGainMap {
    pub fn new(
        width: u32,
        height: u32,
        gains: Vec<f64>,
        shadowing_rho: f64,
        shadowing_sigma_db: f64,
    ) -> Result<Self, RadioError> {
        if gains.len() != (width as usize) * (height as usize) {
            return Err(RadioError::Map(format!("{} values for a {width}x{height} grid", gains.len())));
        }
        if !(0.0..1.0).contains(&shadowing_rho) {
            return Err(RadioError::Map(format!("shadowing_rho {shadowing_rho} outside [0, 1)")));
        }
        if !(shadowing_sigma_db >= 0.0 && shadowing_sigma_db.is_finite()) {
            return Err(RadioError::Map(format!("shadowing_sigma_db {shadowing_sigma_db} must be >= 0")));
        }
        if gains.iter().any(|g| g.is_infinite()) {
            return Err(RadioError::Map("gains must be finite or NaN".into()));
        }
        Ok(Self { width, height, gains, shadowing_rho, shadowing_sigma_db })
    }

    pub fn uniform(world: &GridWorld, gain_db: f64, rho: f64, sigma_db: f64) -> Result<Self, RadioError> {
        let gains = (0..world.height() as i32)
            .flat_map(|y| (0..world.width() as i32).map(move |x| Cell::new(x, y)))
            .map(|c| if world.is_free(c) { gain_db } else { f64::NAN })
            .collect();
        Self::new(world.width(), world.height(), gains, rho, sigma_db)
    }

    pub fn synthetic(world: &GridWorld, spec: &SyntheticGain) -> Result<Self, RadioError> {
        if spec.access_points.is_empty() {
            return Err(RadioError::Map("at least one access point is required".into()));
        }
        let size = world.cell_size_m();
        let gains = (0..world.height() as i32)
            .flat_map(|y| (0..world.width() as i32).map(move |x| Cell::new(x, y)))
            .map(|c| {
                if !world.is_free(c) {
                    return f64::NAN;
                }
                let best = spec
                    .access_points
                    .iter()
                    .map(|ap| {
                        let d = size * (((c.x - ap.x).pow(2) + (c.y - ap.y).pow(2)) as f64).sqrt();
                        spec.ref_gain_db - 10.0 * spec.exponent * d.max(1.0).log10()
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                let loss: f64 = spec.dead_zones.iter().filter(|z| z.contains(c)).map(|z| z.loss_db).sum();
                best - loss
            })
            .collect();
        Self::new(world.width(), world.height(), gains, spec.shadowing_rho, spec.shadowing_sigma_db)
    }

    /// Reads one CSV row per grid row; `NaN` (any case) marks blocked cells.
    pub fn from_csv<R: Read>(reader: R, rho: f64, sigma_db: f64) -> Result<Self, RadioError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
        let mut gains = Vec::new();
        let mut width = None;
        let mut height = 0u32;
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| RadioError::Map(e.to_string()))?;
            if *width.get_or_insert(rec.len()) != rec.len() {
                return Err(RadioError::Map(format!("row {} has {} columns", row + 1, rec.len())));
            }
            for field in rec.iter() {
                let v = if field.eq_ignore_ascii_case("nan") {
                    f64::NAN
                } else {
                    field
                        .parse::<f64>()
                        .map_err(|_| RadioError::Map(format!("row {}: bad value {field:?}", row + 1)))?
                };
                gains.push(v);
            }
            height += 1;
        }
        Self::new(width.unwrap_or(0) as u32, height, gains, rho, sigma_db)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), RadioError> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for row in self.gains.chunks(self.width as usize) {
            let fields: Vec<String> =
                row.iter().map(|g| if g.is_nan() { "NaN".to_string() } else { g.to_string() }).collect();
            wtr.write_record(&fields).map_err(|e| RadioError::Map(e.to_string()))?;
        }
        wtr.flush().map_err(|e| RadioError::Map(e.to_string()))
    }

    /// Gain at `cell`, `None` when out of bounds or blocked.
    pub fn gain_at(&self, cell: Cell) -> Option<f64> {
        if cell.x < 0 || cell.y < 0 || cell.x as u32 >= self.width || cell.y as u32 >= self.height {
            return None;
        }
        let g = self.gains[cell.y as usize * self.width as usize + cell.x as usize];
        (!g.is_nan()).then_some(g)
    }

    pub fn matches(&self, world: &GridWorld) -> bool {
        self.width == world.width() && self.height == world.height()
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn shadowing_rho(&self) -> f64 {
        self.shadowing_rho
    }

    pub fn shadowing_sigma_db(&self) -> f64 {
        self.shadowing_sigma_db
    }

    pub fn shadowing<R: Rng + ?Sized>(&self, rng: &mut R) -> Shadowing {
        Shadowing::stationary(self.shadowing_rho, self.shadowing_sigma_db, rng)
    }
}

/// Stationary AR(1) process `s(t) = rho s(t-1) + e`, `e ~ N(0, sigma sqrt(1 - rho^2))`.
#[derive(Clone, Debug)]
pub struct Shadowing {
    rho: f64,
    innovation: Normal<f64>,
    state: f64,
}

impl Shadowing {
    /// Starts from a draw of the stationary distribution `N(0, sigma)`.
    pub fn stationary<R: Rng + ?Sized>(rho: f64, sigma_db: f64, rng: &mut R) -> Self {
        let start = Normal::new(0.0, sigma_db).expect("sigma >= 0").sample(rng);
        Self::from_state(rho, sigma_db, start)
    }

    pub fn from_state(rho: f64, sigma_db: f64, state: f64) -> Self {
        let innovation = Normal::new(0.0, sigma_db * (1.0 - rho * rho).sqrt()).expect("sigma >= 0");
        Self { rho, innovation, state }
    }

    pub fn current(&self) -> f64 {
        self.state
    }

    /// Advances one step and returns the new value.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        self.state = self.rho * self.state + self.innovation.sample(rng);
        self.state
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceParams {
    pub tx_power_dbm: f64,
    pub noise_dbm: f64,
}

impl Default for TraceParams {
    fn default() -> Self {
        Self { tx_power_dbm: DEFAULT_MAX_POWER_DBM, noise_dbm: DEFAULT_NOISE_DBM }
    }
}

/// Link states along `cells`: map gain plus AR(1) shadowing, at fixed power.
pub fn sample_trace(
    map: &PathGainMap,
    cells: &[Cell],
    params: &TraceParams,
    seed: u64,
) -> Result<Vec<LinkState>, RadioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shadow = map.shadowing(&mut rng);
    let mut out = Vec::with_capacity(cells.len());
    for (t, c) in cells.iter().enumerate() {
        let base = map.gain_at(*c).ok_or_else(|| RadioError::Map(format!("no gain at {c}")))?;
        let s = if t == 0 { shadow.current() } else { shadow.advance(&mut rng) };
        out.push(LinkState::new(base + s, params.tx_power_dbm, params.noise_dbm));
    }
    Ok(out)
}
