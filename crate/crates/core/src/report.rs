//! Result files: `results.jsonl` (one run per line, sorted by method then
//! seed) and `summary.csv` (median and IQR per method and metric), plus
//! cross-directory ranking.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::metrics::{iqr, median, run_summary, MetricsError, RunRecord};
use crate::scenario::sort_records;

pub const RESULTS_FILE: &str = "results.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("scenario ids differ: {0:?} and {1:?}")]
    MixedScenarios(String, String),
    #[error("no run reports metric {0:?}")]
    MissingMetric(String),
    #[error("no results to compare")]
    Empty,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.display().to_string(), source }
}

/// Writes both result files into `dir`, creating it if needed. Records are
/// sorted first, so the output does not depend on execution order.
pub fn write_results(dir: &Path, records: &mut [RunRecord]) -> Result<(), ReportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    sort_records(records);

    let path = dir.join(RESULTS_FILE);
    let mut jsonl = String::new();
    for r in records.iter() {
        jsonl.push_str(&serde_json::to_string(r).expect("records serialize"));
        jsonl.push('\n');
    }
    fs::write(&path, jsonl).map_err(io_err(&path))?;

    let path = dir.join(SUMMARY_FILE);
    let rows = if records.is_empty() { Vec::new() } else { run_summary(records)? };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scenario_id", "method", "metric", "runs", "median", "iqr"])?;
    for r in rows {
        w.write_record([
            r.scenario_id,
            r.method,
            r.metric,
            r.runs.to_string(),
            r.median.to_string(),
            r.iqr.to_string(),
        ])?;
    }
    let bytes =
        w.into_inner().map_err(|e| ReportError::Io { path: path.display().to_string(), source: e.into_error() })?;
    fs::write(&path, bytes).map_err(io_err(&path))?;
    Ok(())
}

/// Reads `results.jsonl` from a directory (or the file itself).
pub fn read_results(path: &Path) -> Result<Vec<RunRecord>, ReportError> {
    let file: PathBuf = if path.is_dir() { path.join(RESULTS_FILE) } else { path.to_path_buf() };
    let f = fs::File::open(&file).map_err(io_err(&file))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(&file))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RunRecord = serde_json::from_str(&line).map_err(|e| ReportError::Parse {
            path: file.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedMethod {
    pub method: String,
    pub runs: usize,
    pub median: f64,
    pub iqr: f64,
}

/// Methods ranked by ascending median of `metric`, ties broken by name.
pub fn rank(records: &[RunRecord], metric: &str) -> Result<(String, Vec<RankedMethod>), ReportError> {
    let first = records.first().ok_or(ReportError::Empty)?;
    let mut by_method: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in records {
        if r.scenario_id != first.scenario_id {
            return Err(ReportError::MixedScenarios(first.scenario_id.clone(), r.scenario_id.clone()));
        }
        if let Some(v) = r.metrics.get(metric) {
            by_method.entry(&r.method).or_default().push(*v);
        }
    }
    if by_method.is_empty() {
        return Err(ReportError::MissingMetric(metric.to_string()));
    }
    let mut ranked = by_method
        .into_iter()
        .map(|(m, v)| Ok(RankedMethod { method: m.to_string(), runs: v.len(), median: median(&v)?, iqr: iqr(&v)? }))
        .collect::<Result<Vec<_>, ReportError>>()?;
    ranked.sort_by(|a, b| a.median.total_cmp(&b.median).then_with(|| a.method.cmp(&b.method)));
    Ok((first.scenario_id.clone(), ranked))
}

/// Loads every directory and ranks the pooled records.
pub fn compare(dirs: &[PathBuf], metric: &str) -> Result<(String, Vec<RankedMethod>), ReportError> {
    let mut all = Vec::new();
    for d in dirs {
        all.extend(read_results(d)?);
    }
    rank(&all, metric)
}

pub fn format_ranking(scenario_id: &str, metric: &str, rows: &[RankedMethod]) -> String {
    let width = rows.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
    let mut s = String::new();
    let _ = writeln!(s, "scenario {scenario_id}, metric {metric}");
    let _ = writeln!(s, "{:>4}  {:<width$}  {:>5}  {:>14}  {:>14}", "rank", "method", "runs", "median", "iqr");
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(s, "{:>4}  {:<width$}  {:>5}  {:>14.4}  {:>14.4}", i + 1, r.method, r.runs, r.median, r.iqr);
    }
    s
}
