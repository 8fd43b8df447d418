//! Intent to configuration, sensing-mode switching, offloading and the
//! latency budget of the closed loop.

mod intent;
pub mod warehouse;

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::planner::{Objective, PlanConfig};
use crate::radio::{Fairness, RadioConfig};
use crate::sensing::{Qos, SenseConfig, SenseMode, VitGrid, FEATURE_BITS, JPEG_QUALITIES};

pub use intent::{
    correct_loop, fallback_config, rule_intent, CorrectionOutcome, EngineError, IntentContext, IntentEngine,
    RuleEngine, SocketEngine, DEFAULT_ENGINE_TIMEOUT,
};

/// Everything the orchestrator hands to the planner, radio and sensing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrchestratorConfig {
    pub pp: PlanConfig,
    pub ra: RadioConfig,
    pub sense: SenseConfig,
}

impl OrchestratorConfig {
    /// Boundary JSON with `pp_config`, `ra_config` and `sense_config`.
    pub fn to_message(&self) -> Value {
        let priority = match self.pp.priority_robot {
            Some(id) => format!("robot_{id}"),
            None => "none".to_string(),
        };
        json!({
            "pp_config": {
                "objective": self.pp.objective.as_str(),
                "priority_robot": priority,
                "min_time_gap_at_conflict": self.pp.min_time_gap_at_conflict,
            },
            "ra_config": {
                "fairness": self.ra.fairness.as_str(),
                "priority_weights": self.ra.priority_weights,
            },
            "sense_config": serde_json::to_value(&self.sense).expect("sense config serializes"),
        })
    }
}

/// One schema violation, naming the field and what it accepts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationError {
    pub field: String,
    pub message: String,
}

impl ValidationError {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self { field: field.to_string(), message: message.into() }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Validates a configuration message for the default two-robot fleet.
pub fn validate(raw: &str) -> Result<OrchestratorConfig, Vec<ValidationError>> {
    validate_with(raw, &[1, 2])
}

/// Validates a configuration message for robots `robot_ids`. All
/// violations are collected rather than stopping at the first.
pub fn validate_with(raw: &str, robot_ids: &[u32]) -> Result<OrchestratorConfig, Vec<ValidationError>> {
    let value: Value = serde_json::from_str(raw)
        .map_err(|e| vec![ValidationError::new("$", format!("not a single JSON object ({e})"))])?;
    let Value::Object(top) = value else {
        return Err(vec![ValidationError::new("$", "expected a JSON object")]);
    };
    let mut errs = Vec::new();
    unknown_keys(&top, "", &["pp_config", "ra_config", "sense_config"], &mut errs);

    let pp = match section(&top, "pp_config", &mut errs) {
        Some(obj) => parse_pp(obj, robot_ids, &mut errs),
        None => None,
    };
    let ra = match section(&top, "ra_config", &mut errs) {
        Some(obj) => parse_ra(obj, robot_ids.len(), &mut errs),
        None => None,
    };
    let sense = match top.get("sense_config") {
        None => Some(default_sense()),
        Some(Value::Object(obj)) => parse_sense(obj, &mut errs),
        Some(_) => {
            errs.push(ValidationError::new("sense_config", "expected an object"));
            None
        }
    };
    match (pp, ra, sense) {
        (Some(pp), Some(ra), Some(sense)) if errs.is_empty() => Ok(OrchestratorConfig { pp, ra, sense }),
        _ => Err(errs),
    }
}

/// Sensing used when a message carries no `sense_config`.
pub fn default_sense() -> SenseConfig {
    SenseConfig::vq(VitGrid::ONE, Qos::BestEffort)
}

fn section<'a>(
    top: &'a Map<String, Value>,
    key: &str,
    errs: &mut Vec<ValidationError>,
) -> Option<&'a Map<String, Value>> {
    match top.get(key) {
        Some(Value::Object(o)) => Some(o),
        Some(_) => {
            errs.push(ValidationError::new(key, "expected an object"));
            None
        }
        None => {
            errs.push(ValidationError::new(key, "is required"));
            None
        }
    }
}

fn unknown_keys(obj: &Map<String, Value>, prefix: &str, allowed: &[&str], errs: &mut Vec<ValidationError>) {
    for k in obj.keys().filter(|k| !allowed.contains(&k.as_str())) {
        let field = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        errs.push(ValidationError::new(&field, format!("unknown key; allowed keys: {}", allowed.join(", "))));
    }
}

fn enum_field<'a>(
    obj: &'a Map<String, Value>,
    field: &str,
    key: &str,
    allowed: &[&str],
    required: bool,
    errs: &mut Vec<ValidationError>,
) -> Option<&'a str> {
    let domain = allowed.join(", ");
    match obj.get(key) {
        Some(Value::String(s)) if allowed.contains(&s.as_str()) => Some(s),
        Some(v) => {
            errs.push(ValidationError::new(field, format!("{v} is not one of {domain}")));
            None
        }
        None if required => {
            errs.push(ValidationError::new(field, format!("is required; one of {domain}")));
            None
        }
        None => None,
    }
}

fn uint_field(
    obj: &Map<String, Value>,
    field: &str,
    key: &str,
    max: u64,
    errs: &mut Vec<ValidationError>,
) -> Option<Option<u64>> {
    match obj.get(key) {
        None => Some(None),
        Some(v) => match v.as_u64() {
            Some(n) if n <= max => Some(Some(n)),
            _ => {
                errs.push(ValidationError::new(field, format!("{v} is not an integer in [0, {max}]")));
                None
            }
        },
    }
}

fn parse_pp(obj: &Map<String, Value>, robot_ids: &[u32], errs: &mut Vec<ValidationError>) -> Option<PlanConfig> {
    unknown_keys(obj, "pp_config", &["objective", "priority_robot", "min_time_gap_at_conflict"], errs);
    let objective = enum_field(obj, "pp_config.objective", "objective", &["makespan", "safety_first"], true, errs)
        .map(|s| if s == "makespan" { Objective::Makespan } else { Objective::SafetyFirst });

    let mut names: Vec<String> = robot_ids.iter().map(|id| format!("robot_{id}")).collect();
    names.push("none".into());
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let priority = enum_field(obj, "pp_config.priority_robot", "priority_robot", &name_refs, true, errs)
        .map(|s| s.strip_prefix("robot_").and_then(|k| k.parse::<u32>().ok()));

    let gap = match uint_field(obj, "pp_config.min_time_gap_at_conflict", "min_time_gap_at_conflict", 1000, errs) {
        Some(Some(g)) => Some(g as u32),
        Some(None) => {
            errs.push(ValidationError::new(
                "pp_config.min_time_gap_at_conflict",
                "is required; a nonnegative integer number of steps",
            ));
            None
        }
        None => None,
    };
    Some(PlanConfig { objective: objective?, priority_robot: priority?, min_time_gap_at_conflict: gap? })
}

fn parse_ra(obj: &Map<String, Value>, robots: usize, errs: &mut Vec<ValidationError>) -> Option<RadioConfig> {
    unknown_keys(obj, "ra_config", &["fairness", "priority_weights"], errs);
    let fairness = enum_field(obj, "ra_config.fairness", "fairness", &["max_min", "proportional"], true, errs)
        .map(|s| if s == "max_min" { Fairness::MaxMin } else { Fairness::Proportional });

    let field = "ra_config.priority_weights";
    let weights = match obj.get("priority_weights") {
        None => {
            errs.push(ValidationError::new(field, format!("is required; {robots} nonnegative numbers summing to 1")));
            None
        }
        Some(Value::Array(items)) => {
            let nums: Option<Vec<f64>> = items.iter().map(Value::as_f64).collect();
            match nums {
                None => {
                    errs.push(ValidationError::new(field, "entries must be numbers"));
                    None
                }
                Some(w) if w.len() != robots => {
                    errs.push(ValidationError::new(field, format!("has {} entries, expected {robots}", w.len())));
                    None
                }
                Some(w) if w.iter().any(|x| *x < 0.0) => {
                    errs.push(ValidationError::new(field, "entries must be >= 0"));
                    None
                }
                Some(w) => {
                    let sum: f64 = w.iter().sum();
                    if (sum - 1.0).abs() > 1e-6 {
                        let shown = (sum * 1e6).round() / 1e6;
                        errs.push(ValidationError::new(field, format!("weights sum {shown} ≠ 1")));
                        None
                    } else {
                        Some(w)
                    }
                }
            }
        }
        Some(v) => {
            errs.push(ValidationError::new(field, format!("{v} is not an array of numbers")));
            None
        }
    };
    RadioConfig::new(fairness?, weights?).ok()
}

fn parse_sense(obj: &Map<String, Value>, errs: &mut Vec<ValidationError>) -> Option<SenseConfig> {
    unknown_keys(
        obj,
        "sense_config",
        &["mode", "jpeg_quality", "vit_grid", "feature_dim", "feature_bits", "qos"],
        errs,
    );
    let before = errs.len();
    let modes: Vec<&str> = SenseMode::ALL.iter().map(|m| m.as_str()).collect();
    let mode = enum_field(obj, "sense_config.mode", "mode", &modes, true, errs)
        .and_then(|s| SenseMode::ALL.into_iter().find(|m| m.as_str() == s));
    let qos = enum_field(obj, "sense_config.qos", "qos", &["reliable", "best_effort"], false, errs).map(|s| {
        if s == "reliable" {
            Qos::Reliable
        } else {
            Qos::BestEffort
        }
    });

    let jpeg_quality = match obj.get("jpeg_quality") {
        None => None,
        Some(v) => match v.as_u64() {
            Some(q) if JPEG_QUALITIES.contains(&(q as u8)) && q <= 255 => Some(q as u8),
            _ => {
                errs.push(ValidationError::new("sense_config.jpeg_quality", format!("{v} is not one of 95, 80, 60")));
                None
            }
        },
    };
    let vit_grid = match obj.get("vit_grid") {
        None => None,
        Some(v) => match v.as_str().and_then(|s| s.parse::<VitGrid>().ok()) {
            Some(g) => Some(g),
            None => {
                errs.push(ValidationError::new("sense_config.vit_grid", format!("{v} is not one of 1x1, 1x2, 1x3")));
                None
            }
        },
    };
    let feature_dim = match uint_field(obj, "sense_config.feature_dim", "feature_dim", u32::MAX as u64, errs) {
        Some(d) => d.map(|d| d as u32),
        None => None,
    };
    let feature_bits = match obj.get("feature_bits") {
        None => None,
        Some(v) => match v.as_u64() {
            Some(b) if b <= 32 && FEATURE_BITS.contains(&(b as u8)) => Some(b as u8),
            _ => {
                errs.push(ValidationError::new("sense_config.feature_bits", format!("{v} is not one of 4, 8, 16, 32")));
                None
            }
        },
    };
    if errs.len() > before {
        return None;
    }
    let mode = mode?;
    let qos = qos.unwrap_or(match mode {
        SenseMode::Raw | SenseMode::Jpeg => Qos::Reliable,
        SenseMode::SemanticFeature | SenseMode::Vq => Qos::BestEffort,
    });
    let cfg = SenseConfig { mode, jpeg_quality, vit_grid, feature_dim, feature_bits, qos };
    if let Err(e) = cfg.validate() {
        errs.push(ValidationError::new("sense_config", e.to_string()));
        return None;
    }
    Some(cfg)
}

/// RSSI ladder for camera streaming: JPEG over reliable transport on strong
/// links, progressively fewer VQ tiles over best-effort as RSSI drops.
pub fn select_sense_mode(rssi_dbm: f64) -> SenseConfig {
    let grid = |cols| VitGrid { rows: 1, cols };
    if rssi_dbm >= -39.0 {
        SenseConfig::jpeg(80, Qos::Reliable)
    } else if rssi_dbm >= -41.0 {
        SenseConfig::jpeg(60, Qos::Reliable)
    } else if rssi_dbm >= -43.0 {
        SenseConfig::vq(grid(3), Qos::BestEffort)
    } else if rssi_dbm >= -45.0 {
        SenseConfig::vq(grid(2), Qos::BestEffort)
    } else {
        SenseConfig::vq(grid(1), Qos::BestEffort)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffloadDecision {
    Offload,
    Local,
}

/// Offload only when the round trip is strictly shorter than the wait it avoids.
pub fn offload_gate(t_uplink_s: f64, t_edge_s: f64, t_downlink_s: f64, t_wait_s: f64) -> OffloadDecision {
    if t_uplink_s + t_edge_s + t_downlink_s < t_wait_s {
        OffloadDecision::Offload
    } else {
        OffloadDecision::Local
    }
}

/// Per-decision latency components and the deadline they must beat.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopBudget {
    pub detection_s: f64,
    pub encode_s: f64,
    pub link_context_s: f64,
    pub orchestration_s: f64,
    pub deadline_s: f64,
}

impl Default for LoopBudget {
    /// Representative warehouse values: 96.17 ms detection, 1.23 ms
    /// encoding, 46.91 ms link context, 884 ms orchestration, 1.4 s per cell.
    fn default() -> Self {
        Self {
            detection_s: 0.09617,
            encode_s: 0.00123,
            link_context_s: 0.04691,
            orchestration_s: 0.884,
            deadline_s: 1.4,
        }
    }
}

impl LoopBudget {
    pub fn compute_s(&self) -> f64 {
        self.detection_s + self.encode_s + self.link_context_s + self.orchestration_s
    }
}

/// Total loop time and whether it beats the deadline (strictly).
pub fn loop_feasible(budget: &LoopBudget) -> (f64, bool) {
    let total = budget.compute_s();
    (total, total < budget.deadline_s)
}
