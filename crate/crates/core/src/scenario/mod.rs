//! Scenario files and the runners that turn `(scenario, method, seed)` into
//! a [`RunRecord`].
//!
//! A scenario is one JSON object with `schema_version`, `id`, `kind`,
//! `seeds`, `methods` and exactly one section named after its kind.
//! Unknown fields are rejected everywhere.

mod followme;
mod mcs;
mod warehouse;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::RunRecord;

pub use followme::{FixedMethod, FollowMeSpec, LossModel, RssiTrace, ORCHESTRATED};
pub use mcs::McsSpec;
pub use warehouse::{GainSpec, HumanSpec, PayloadSpec, RobotSpec, WarehouseSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Warehouse,
    Mcs,
    Followme,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Warehouse => "warehouse",
            ScenarioKind::Mcs => "mcs",
            ScenarioKind::Followme => "followme",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// On-disk layout of a scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub id: String,
    pub kind: ScenarioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub seeds: Vec<u64>,
    pub methods: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warehouse: Option<WarehouseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcs: Option<McsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub followme: Option<FollowMeSpec>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{file}:{line}:{column}: {message}")]
    Parse { file: String, line: usize, column: usize, message: String },
    #[error("{file}: {field}: {message}")]
    Invalid { file: String, field: String, message: String },
    #[error("{method} seed {seed}: {message}")]
    Run { method: String, seed: u64, message: String },
}

impl ScenarioError {
    /// Errors caused by the scenario content rather than by running it.
    pub fn is_validation(&self) -> bool {
        matches!(self, ScenarioError::Parse { .. } | ScenarioError::Invalid { .. })
    }
}

/// Collects field errors while resolving a section.
pub(crate) struct Ctx<'a> {
    file: &'a str,
    base_dir: &'a Path,
}

impl Ctx<'_> {
    pub(crate) fn invalid(&self, field: &str, message: impl fmt::Display) -> ScenarioError {
        ScenarioError::Invalid { file: self.file.to_string(), field: field.to_string(), message: message.to_string() }
    }

    pub(crate) fn read(&self, field: &str, rel: &str) -> Result<String, ScenarioError> {
        let path = self.base_dir.join(rel);
        fs::read_to_string(&path).map_err(|e| self.invalid(field, format!("cannot read {}: {e}", path.display())))
    }
}

enum Body {
    Warehouse(Box<warehouse::Resolved>),
    Mcs(Box<mcs::Resolved>),
    Followme(Box<followme::Resolved>),
}

/// A parsed and validated scenario, ready to run.
pub struct Scenario {
    pub file: ScenarioFile,
    label: String,
    body: Body,
}

impl fmt::Debug for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scenario").field("label", &self.label).field("file", &self.file).finish_non_exhaustive()
    }
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Self::from_json(&text, &base, &path.display().to_string())
    }

    /// Parses `text`; relative file references resolve against `base_dir`
    /// and errors are reported against `label`.
    pub fn from_json(text: &str, base_dir: &Path, label: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            file: label.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let cx = Ctx { file: label, base_dir };
        if file.schema_version != SCHEMA_VERSION {
            return Err(cx.invalid(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", file.schema_version),
            ));
        }
        if file.id.trim().is_empty() {
            return Err(cx.invalid("id", "must not be empty"));
        }
        if file.seeds.is_empty() {
            return Err(cx.invalid("seeds", "at least one seed is required"));
        }
        if file.methods.is_empty() {
            return Err(cx.invalid("methods", "at least one method is required"));
        }
        let sections = [
            ("warehouse", file.warehouse.is_some()),
            ("mcs", file.mcs.is_some()),
            ("followme", file.followme.is_some()),
        ];
        for (name, present) in sections {
            if present != (name == file.kind.as_str()) {
                let msg = if present {
                    format!("section not allowed for kind {}", file.kind)
                } else {
                    format!("section required for kind {}", file.kind)
                };
                return Err(cx.invalid(name, msg));
            }
        }
        let body = match file.kind {
            ScenarioKind::Warehouse => {
                Body::Warehouse(Box::new(warehouse::resolve(file.warehouse.as_ref().expect("checked"), &cx)?))
            }
            ScenarioKind::Mcs => Body::Mcs(Box::new(mcs::resolve(file.mcs.as_ref().expect("checked"), &cx)?)),
            ScenarioKind::Followme => {
                Body::Followme(Box::new(followme::resolve(file.followme.as_ref().expect("checked"), &cx)?))
            }
        };
        let scenario = Self { label: label.to_string(), body, file };
        scenario.check_methods(&scenario.file.methods)?;
        Ok(scenario)
    }

    pub fn id(&self) -> &str {
        &self.file.id
    }

    pub fn kind(&self) -> ScenarioKind {
        self.file.kind
    }

    pub fn seeds(&self) -> &[u64] {
        &self.file.seeds
    }

    pub fn methods(&self) -> &[String] {
        &self.file.methods
    }

    /// Rejects method names this scenario cannot run, naming the first one.
    pub fn check_methods(&self, methods: &[String]) -> Result<(), ScenarioError> {
        for m in methods {
            let ok = match &self.body {
                Body::Warehouse(_) => warehouse::method(m).is_ok(),
                Body::Mcs(_) => mcs::method(m).is_ok(),
                Body::Followme(r) => r.knows(m),
            };
            if !ok {
                return Err(ScenarioError::Invalid {
                    file: self.label.clone(),
                    field: "methods".into(),
                    message: format!("unknown method {m:?} for kind {}", self.file.kind),
                });
            }
        }
        Ok(())
    }

    pub fn run_one(&self, method: &str, seed: u64) -> Result<RunRecord, ScenarioError> {
        let fail = |message: String| ScenarioError::Run { method: method.to_string(), seed, message };
        let metrics = match &self.body {
            Body::Warehouse(r) => r.run(method, seed).map_err(fail)?,
            Body::Mcs(r) => r.run(method, seed).map_err(fail)?,
            Body::Followme(r) => r.run(method, seed).map_err(fail)?,
        };
        Ok(RunRecord { scenario_id: self.file.id.clone(), method: method.to_string(), seed, metrics })
    }

    /// Every `(method, seed)` pair in order; the result is sorted by
    /// `(method, seed)`.
    pub fn run_all(&self, methods: &[String], seeds: &[u64]) -> Result<Vec<RunRecord>, ScenarioError> {
        self.check_methods(methods)?;
        let mut out = Vec::with_capacity(methods.len() * seeds.len());
        for m in methods {
            for s in seeds {
                out.push(self.run_one(m, *s)?);
            }
        }
        sort_records(&mut out);
        Ok(out)
    }
}

pub fn sort_records(records: &mut [RunRecord]) {
    records.sort_by(|a, b| a.method.cmp(&b.method).then(a.seed.cmp(&b.seed)));
}
