use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;
use serde_json::{json, Value};
use thiserror::Error;

use super::{default_sense, validate_with, OrchestratorConfig, ValidationError};
use crate::planner::{Objective, PlanConfig};
use crate::radio::{Fairness, RadioConfig};

pub const DEFAULT_ENGINE_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Clone, Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("intent engine timed out")]
    Timeout,
    #[error("intent engine I/O: {0}")]
    Io(String),
}

/// What the engine may know about the fleet besides the operator text.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IntentContext {
    pub robot_ids: Vec<u32>,
    pub state: Value,
}

impl IntentContext {
    pub fn for_robots(robot_ids: &[u32]) -> Self {
        Self { robot_ids: robot_ids.to_vec(), state: Value::Null }
    }
}

/// Produces a raw configuration message from operator intent. `feedback`
/// holds the validation errors of the previous attempt, empty on the first.
pub trait IntentEngine {
    fn propose(
        &mut self,
        intent: &str,
        ctx: &IntentContext,
        feedback: &[ValidationError],
    ) -> Result<String, EngineError>;
}

/// Deterministic keyword engine.
#[derive(Clone, Copy, Debug, Default)]
pub struct RuleEngine;

impl IntentEngine for RuleEngine {
    fn propose(&mut self, intent: &str, ctx: &IntentContext, _: &[ValidationError]) -> Result<String, EngineError> {
        Ok(rule_intent(intent, &ctx.robot_ids))
    }
}

static ROBOT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"robot[\s~_\-]*(\d+)").unwrap());
static SAFE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bsafe(ly|ty)?\b").unwrap());
static VERY_SAFE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(very|extremely)\s+safe(ly)?\b").unwrap());
static GAP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bgap\s*(of\s*)?(\d+)").unwrap());
static MIN_QUALITY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"minimum\s+quality.*guarantee|\bworst\b").unwrap());

/// Keyword rules mapping operator text to a `pp_config`/`ra_config` message.
///
/// * safe, safely, safety: `safety_first` with gap 1; "very safe(ly)": gap 3.
///   Otherwise `makespan` with gap 0. "gap N" sets the gap explicitly.
/// * The first known robot named in a sentence containing "important" or
///   "priority" becomes `priority_robot` and gets weight 0.7, the rest share 0.3.
/// * "minimum quality ... guaranteed" or "worst": `max_min`, else `proportional`.
///
/// Empty text yields the fallback configuration.
pub fn rule_intent(intent: &str, robot_ids: &[u32]) -> String {
    if intent.trim().is_empty() {
        return fallback_config(robot_ids).to_message().to_string();
    }
    let text = intent.to_lowercase();
    let safety = SAFE.is_match(&text);
    let objective = if safety { Objective::SafetyFirst } else { Objective::Makespan };
    let gap = match GAP.captures(&text).and_then(|c| c[2].parse::<u32>().ok()) {
        Some(g) => g,
        None if VERY_SAFE.is_match(&text) => 3,
        None if safety => 1,
        None => 0,
    };
    let priority =
        text.split(['.', '!', '?', '\n', ';']).filter(|s| s.contains("important") || s.contains("priority")).find_map(
            |s| ROBOT.captures_iter(s).filter_map(|c| c[1].parse::<u32>().ok()).find(|id| robot_ids.contains(id)),
        );
    let fairness = if MIN_QUALITY.is_match(&text) { Fairness::MaxMin } else { Fairness::Proportional };
    let weights = weights_for(robot_ids, priority);
    let priority_name = priority.map_or("none".to_string(), |id| format!("robot_{id}"));
    json!({
        "pp_config": {
            "objective": objective.as_str(),
            "priority_robot": priority_name,
            "min_time_gap_at_conflict": gap,
        },
        "ra_config": {
            "fairness": fairness.as_str(),
            "priority_weights": weights,
        },
    })
    .to_string()
}

fn weights_for(robot_ids: &[u32], priority: Option<u32>) -> Vec<f64> {
    let n = robot_ids.len();
    match priority {
        Some(p) if n >= 2 => {
            let other = 0.3 / (n - 1) as f64;
            robot_ids.iter().map(|id| if *id == p { 0.7 } else { other }).collect()
        }
        _ => vec![1.0 / n.max(1) as f64; n.max(1)],
    }
}

/// Conservative configuration used when no valid message is obtained.
pub fn fallback_config(robot_ids: &[u32]) -> OrchestratorConfig {
    OrchestratorConfig {
        pp: PlanConfig { objective: Objective::SafetyFirst, priority_robot: None, min_time_gap_at_conflict: 1 },
        ra: RadioConfig::equal_weights(Fairness::MaxMin, robot_ids.len()),
        sense: default_sense(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrectionOutcome {
    pub config: OrchestratorConfig,
    pub attempts: u32,
    pub fallback: bool,
    /// Validation errors of each failed attempt, in order.
    pub rejected: Vec<Vec<ValidationError>>,
    pub engine_error: Option<EngineError>,
}

/// Asks `engine` for a configuration, feeding validation errors back on
/// each retry. After `max_attempts` invalid answers, or on any engine
/// error, the fallback configuration is returned.
pub fn correct_loop(
    engine: &mut dyn IntentEngine,
    intent: &str,
    ctx: &IntentContext,
    max_attempts: u32,
) -> CorrectionOutcome {
    let mut rejected: Vec<Vec<ValidationError>> = Vec::new();
    let mut attempts = 0;
    let mut engine_error = None;
    while attempts < max_attempts.max(1) {
        attempts += 1;
        let feedback = rejected.last().map(Vec::as_slice).unwrap_or(&[]);
        match engine.propose(intent, ctx, feedback) {
            Ok(raw) => match validate_with(&raw, &ctx.robot_ids) {
                Ok(config) => return CorrectionOutcome { config, attempts, fallback: false, rejected, engine_error },
                Err(errs) => rejected.push(errs),
            },
            Err(e) => {
                engine_error = Some(e);
                break;
            }
        }
    }
    CorrectionOutcome { config: fallback_config(&ctx.robot_ids), attempts, fallback: true, rejected, engine_error }
}

/// External engine speaking one JSON line per request and per response over
/// TCP: `{"intent", "context", "errors"?}` in, the raw message out.
#[derive(Clone, Debug)]
pub struct SocketEngine {
    pub addr: String,
    pub timeout: Duration,
}

impl SocketEngine {
    pub fn new(addr: impl Into<String>) -> Self {
        Self { addr: addr.into(), timeout: DEFAULT_ENGINE_TIMEOUT }
    }
}

fn io_err(e: std::io::Error) -> EngineError {
    match e.kind() {
        ErrorKind::TimedOut | ErrorKind::WouldBlock => EngineError::Timeout,
        _ => EngineError::Io(e.to_string()),
    }
}

impl IntentEngine for SocketEngine {
    fn propose(
        &mut self,
        intent: &str,
        ctx: &IntentContext,
        feedback: &[ValidationError],
    ) -> Result<String, EngineError> {
        let addr = self
            .addr
            .to_socket_addrs()
            .map_err(io_err)?
            .next()
            .ok_or_else(|| EngineError::Io(format!("cannot resolve {}", self.addr)))?;
        let mut stream = TcpStream::connect_timeout(&addr, self.timeout).map_err(io_err)?;
        stream.set_read_timeout(Some(self.timeout)).map_err(io_err)?;
        stream.set_write_timeout(Some(self.timeout)).map_err(io_err)?;
        let mut request = json!({
            "intent": intent,
            "context": {"robot_ids": ctx.robot_ids, "state": ctx.state},
        });
        if !feedback.is_empty() {
            let errs: Vec<String> = feedback.iter().map(ToString::to_string).collect();
            request["errors"] = json!(errs);
        }
        let mut line = request.to_string();
        line.push('\n');
        stream.write_all(line.as_bytes()).map_err(io_err)?;
        let mut response = String::new();
        BufReader::new(stream).read_line(&mut response).map_err(io_err)?;
        if response.is_empty() {
            return Err(EngineError::Io("connection closed without a response".into()));
        }
        Ok(response.trim_end().to_string())
    }
}
