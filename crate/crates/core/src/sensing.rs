//! Uplink payload sizes of the sensing representations, the VQ codec and
//! bounding-box back-projection.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SensingError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("codeword index {index} out of range for K={k}")]
    IndexOutOfRange { index: usize, k: usize },
    #[error("invalid codebook: {0}")]
    Codebook(String),
    #[error("invalid sense config: {0}")]
    Config(String),
    #[error("no payload entry for {0}")]
    MissingEntry(String),
    #[error("depth must be > 0, got {0}")]
    Depth(f64),
    #[error("invalid bounding box")]
    BoundingBox,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SenseMode {
    Raw,
    Jpeg,
    SemanticFeature,
    Vq,
}

impl SenseMode {
    pub const ALL: [SenseMode; 4] = [SenseMode::Raw, SenseMode::Jpeg, SenseMode::SemanticFeature, SenseMode::Vq];

    pub fn as_str(self) -> &'static str {
        match self {
            SenseMode::Raw => "raw",
            SenseMode::Jpeg => "jpeg",
            SenseMode::SemanticFeature => "semantic_feature",
            SenseMode::Vq => "vq",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Qos {
    Reliable,
    #[default]
    BestEffort,
}

impl Qos {
    pub fn as_str(self) -> &'static str {
        match self {
            Qos::Reliable => "reliable",
            Qos::BestEffort => "best_effort",
        }
    }
}

/// Tile layout of the VQ tokenizer, written `RxC`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct VitGrid {
    pub rows: u32,
    pub cols: u32,
}

impl VitGrid {
    pub const ONE: VitGrid = VitGrid { rows: 1, cols: 1 };
    pub const ALLOWED: [VitGrid; 3] =
        [VitGrid { rows: 1, cols: 1 }, VitGrid { rows: 1, cols: 2 }, VitGrid { rows: 1, cols: 3 }];

    pub fn tiles(self) -> u32 {
        self.rows * self.cols
    }
}

impl fmt::Display for VitGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

impl FromStr for VitGrid {
    type Err = SensingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SensingError::Config(format!("vit_grid {s:?} is not one of 1x1, 1x2, 1x3"));
        let (r, c) = s.split_once(['x', '×']).ok_or_else(bad)?;
        let g = VitGrid { rows: r.trim().parse().map_err(|_| bad())?, cols: c.trim().parse().map_err(|_| bad())? };
        if Self::ALLOWED.contains(&g) {
            Ok(g)
        } else {
            Err(bad())
        }
    }
}

impl TryFrom<String> for VitGrid {
    type Error = SensingError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<VitGrid> for String {
    fn from(g: VitGrid) -> Self {
        g.to_string()
    }
}

pub const JPEG_QUALITIES: [u8; 3] = [95, 80, 60];
pub const FEATURE_BITS: [u8; 4] = [4, 8, 16, 32];

/// What a robot sends per frame and how.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SenseConfig {
    pub mode: SenseMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jpeg_quality: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vit_grid: Option<VitGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_dim: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_bits: Option<u8>,
    #[serde(default)]
    pub qos: Qos,
}

impl SenseConfig {
    pub fn raw(qos: Qos) -> Self {
        Self { mode: SenseMode::Raw, jpeg_quality: None, vit_grid: None, feature_dim: None, feature_bits: None, qos }
    }

    pub fn jpeg(quality: u8, qos: Qos) -> Self {
        Self { mode: SenseMode::Jpeg, jpeg_quality: Some(quality), ..Self::raw(qos) }
    }

    pub fn vq(grid: VitGrid, qos: Qos) -> Self {
        Self { mode: SenseMode::Vq, vit_grid: Some(grid), ..Self::raw(qos) }
    }

    pub fn semantic(dim: u32, bits: u8, qos: Qos) -> Self {
        Self { mode: SenseMode::SemanticFeature, feature_dim: Some(dim), feature_bits: Some(bits), ..Self::raw(qos) }
    }

    pub fn validate(&self) -> Result<(), SensingError> {
        match self.mode {
            SenseMode::Raw => {}
            SenseMode::Jpeg => match self.jpeg_quality {
                Some(q) if JPEG_QUALITIES.contains(&q) => {}
                Some(q) => return Err(SensingError::Config(format!("jpeg_quality {q} is not one of 95, 80, 60"))),
                None => return Err(SensingError::Config("jpeg mode needs jpeg_quality".into())),
            },
            SenseMode::SemanticFeature => {
                match self.feature_dim {
                    Some(d) if d >= 1 => {}
                    _ => return Err(SensingError::Config("semantic_feature mode needs feature_dim >= 1".into())),
                }
                match self.feature_bits {
                    Some(b) if FEATURE_BITS.contains(&b) => {}
                    _ => return Err(SensingError::Config("feature_bits must be one of 4, 8, 16, 32".into())),
                }
            }
            SenseMode::Vq => {
                if self.vit_grid.is_none() {
                    return Err(SensingError::Config("vq mode needs vit_grid".into()));
                }
            }
        }
        Ok(())
    }

    /// Short label such as `jpeg_q80` or `vq_1x3`.
    pub fn label(&self) -> String {
        match self.mode {
            SenseMode::Jpeg => format!("jpeg_q{}", self.jpeg_quality.unwrap_or(0)),
            SenseMode::Vq => format!("vq_{}", self.vit_grid.unwrap_or(VitGrid::ONE)),
            SenseMode::SemanticFeature => {
                format!("feat_{}x{}b", self.feature_dim.unwrap_or(0), self.feature_bits.unwrap_or(0))
            }
            SenseMode::Raw => "raw".into(),
        }
    }
}

fn default_jpeg_bytes() -> BTreeMap<u8, u64> {
    BTreeMap::from([(95, 80_000), (80, 33_380), (60, 22_280)])
}

/// Frame geometry and codec constants used for payload accounting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PayloadParams {
    pub image_width: u32,
    pub image_height: u32,
    /// JPEG frame size per quality level.
    pub jpeg_bytes: BTreeMap<u8, u64>,
    pub tokens_per_tile: u32,
    pub codebook_size: u32,
    pub tile_overhead_bytes: u32,
}

impl Default for PayloadParams {
    fn default() -> Self {
        Self {
            image_width: 1920,
            image_height: 1080,
            jpeg_bytes: default_jpeg_bytes(),
            tokens_per_tile: 1024,
            codebook_size: 8192,
            tile_overhead_bytes: 56,
        }
    }
}

/// `ceil(log2 k)`, with a single codeword needing zero bits.
pub fn index_bits(k: u32) -> u32 {
    if k <= 1 {
        0
    } else {
        u32::BITS - (k - 1).leading_zeros()
    }
}

/// Bytes on the air for one frame.
pub fn payload_bytes(cfg: &SenseConfig, params: &PayloadParams) -> Result<u64, SensingError> {
    cfg.validate()?;
    Ok(match cfg.mode {
        SenseMode::Raw => params.image_width as u64 * params.image_height as u64 * 3,
        SenseMode::Jpeg => {
            let q = cfg.jpeg_quality.expect("validated");
            *params.jpeg_bytes.get(&q).ok_or_else(|| SensingError::MissingEntry(format!("jpeg quality {q}")))?
        }
        SenseMode::SemanticFeature => {
            let bits = cfg.feature_dim.expect("validated") as u64 * cfg.feature_bits.expect("validated") as u64;
            bits.div_ceil(8)
        }
        SenseMode::Vq => {
            let tile_bits = params.tokens_per_tile as u64 * index_bits(params.codebook_size) as u64;
            let tile = tile_bits.div_ceil(8) + params.tile_overhead_bytes as u64;
            cfg.vit_grid.expect("validated").tiles() as u64 * tile
        }
    })
}

/// `K` codewords of dimension `d`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    k: usize,
    d: usize,
    data: Vec<f64>,
}

impl Codebook {
    pub fn new(codewords: Vec<Vec<f64>>) -> Result<Self, SensingError> {
        let k = codewords.len();
        if k == 0 {
            return Err(SensingError::Codebook("K must be >= 1".into()));
        }
        let d = codewords[0].len();
        if d == 0 {
            return Err(SensingError::Codebook("d must be >= 1".into()));
        }
        if let Some(bad) = codewords.iter().position(|c| c.len() != d) {
            return Err(SensingError::Codebook(format!("codeword {bad} has length {}", codewords[bad].len())));
        }
        if codewords.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SensingError::Codebook("codewords must be finite".into()));
        }
        Ok(Self { k, d, data: codewords.into_iter().flatten().collect() })
    }

    /// Codewords with i.i.d. standard-uniform entries.
    pub fn random<R: Rng + ?Sized>(k: usize, d: usize, rng: &mut R) -> Self {
        assert!(k >= 1 && d >= 1);
        Self { k, d, data: (0..k * d).map(|_| rng.random::<f64>()).collect() }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn index_bits(&self) -> u32 {
        index_bits(self.k as u32)
    }

    pub fn codeword(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.k, self.d);
        for i in 0..self.k {
            let row: Vec<String> = self.codeword(i).iter().map(f64::to_string).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

impl FromStr for Codebook {
    type Err = SensingError;

    /// Header `K d`, then `K` rows of `d` whitespace-separated reals.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut lines = s.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| SensingError::Codebook("empty file".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| SensingError::Codebook(format!("bad header {header:?}"))))
            .collect::<Result<_, _>>()?;
        let [k, d] = dims[..] else {
            return Err(SensingError::Codebook(format!("header must be \"K d\", got {header:?}")));
        };
        let mut rows = Vec::with_capacity(k);
        for (i, line) in lines.enumerate() {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| SensingError::Codebook(format!("row {}: bad value {t:?}", i + 1))))
                .collect::<Result<_, _>>()?;
            if row.len() != d {
                return Err(SensingError::Codebook(format!("row {} has {} values, expected {d}", i + 1, row.len())));
            }
            rows.push(row);
        }
        if rows.len() != k {
            return Err(SensingError::Codebook(format!("expected {k} rows, found {}", rows.len())));
        }
        Codebook::new(rows)
    }
}

/// Index of the nearest codeword in squared Euclidean distance, lowest
/// index on ties. Rows are abandoned once their partial sum reaches the
/// current best.
pub fn vq_encode(x: &[f64], cb: &Codebook) -> Result<usize, SensingError> {
    if x.len() != cb.d {
        return Err(SensingError::Dimension { expected: cb.d, got: x.len() });
    }
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    'rows: for i in 0..cb.k {
        let mut acc = 0.0;
        for (a, b) in x.iter().zip(cb.codeword(i)) {
            let diff = a - b;
            acc += diff * diff;
            if acc >= best_dist {
                continue 'rows;
            }
        }
        best = i;
        best_dist = acc;
    }
    Ok(best)
}

pub fn vq_decode(index: usize, cb: &Codebook) -> Result<Vec<f64>, SensingError> {
    if index >= cb.k {
        return Err(SensingError::IndexOutOfRange { index, k: cb.k });
    }
    Ok(cb.codeword(index).to_vec())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Back-projects the center of a pixel box at depth `z` into camera
/// coordinates.
pub fn bbox_to_point(
    bbox: (f64, f64, f64, f64),
    z: f64,
    intr: &CameraIntrinsics,
) -> Result<(f64, f64, f64), SensingError> {
    let (u0, v0, u1, v1) = bbox;
    if !(u0 <= u1 && v0 <= v1) {
        return Err(SensingError::BoundingBox);
    }
    if !(z > 0.0) {
        return Err(SensingError::Depth(z));
    }
    if !(intr.fx > 0.0 && intr.fy > 0.0) {
        return Err(SensingError::Config("focal lengths must be > 0".into()));
    }
    let (uc, vc) = ((u0 + u1) / 2.0, (v0 + v1) / 2.0);
    Ok((z * (uc - intr.cx) / intr.fx, z * (vc - intr.cy) / intr.fy, z))
}
