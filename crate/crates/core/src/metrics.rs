//! KPIs shared by all scenarios and their aggregation across seeds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::SpaceTimePath;
use crate::world::Cell;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("robot {0} did not reach its goal")]
    NotArrived(u32),
    #[error("no samples")]
    Empty,
    #[error("total_steps must be > 0")]
    ZeroSteps,
    #[error("frame arrivals must be sorted and within [0, {0}]")]
    BadArrivals(u64),
    #[error("records mix scenarios {0:?} and {1:?}")]
    MixedScenarios(String, String),
    #[error("sample {0} is negative or not finite")]
    BadSample(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopEvent {
    pub robot_id: u32,
    pub step: u32,
    pub duration_s: f64,
}

/// Halts recorded during a run, outside of the executed paths.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StopLog {
    pub events: Vec<StopEvent>,
}

impl StopLog {
    pub fn record(&mut self, robot_id: u32, step: u32, duration_s: f64) {
        self.events.push(StopEvent { robot_id, step, duration_s });
    }

    pub fn halt_seconds(&self, robot_id: u32) -> f64 {
        self.events.iter().filter(|e| e.robot_id == robot_id).map(|e| e.duration_s).sum()
    }

    pub fn count(&self) -> usize {
        self.events.len()
    }
}

/// Executed path of one robot together with the goal it was sent to.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub path: SpaceTimePath,
    pub goal: Cell,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionTimes {
    pub per_robot_s: BTreeMap<u32, f64>,
    pub max_s: f64,
}

/// `arrival_step * cell_traverse_s + halt seconds` per robot, and the
/// maximum over robots.
pub fn completion_time(
    runs: &[Trajectory],
    stops: &StopLog,
    cell_traverse_s: f64,
) -> Result<CompletionTimes, MetricsError> {
    let mut per_robot_s = BTreeMap::new();
    for r in runs {
        if r.path.goal() != r.goal {
            return Err(MetricsError::NotArrived(r.path.robot_id));
        }
        let t = r.path.arrival_step() as f64 * cell_traverse_s + stops.halt_seconds(r.path.robot_id);
        per_robot_s.insert(r.path.robot_id, t);
    }
    let max_s = per_robot_s.values().cloned().fold(0.0, f64::max);
    Ok(CompletionTimes { per_robot_s, max_s })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailStats {
    pub mean: f64,
    pub std: f64,
    pub p95: f64,
}

/// Nearest-rank percentile: the `ceil(p n)`-th smallest sample.
pub fn percentile(samples: &[f64], p: f64) -> Result<f64, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(nearest_rank(&sorted, p))
}

fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

pub fn tail_stats(samples: &[f64]) -> Result<TailStats, MetricsError> {
    if let Some(bad) = samples.iter().find(|s| !s.is_finite() || **s < 0.0) {
        return Err(MetricsError::BadSample(*bad));
    }
    let p95 = percentile(samples, 0.95)?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let std = if samples.len() < 2 {
        0.0
    } else {
        (samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(TailStats { mean, std, p95 })
}

/// Percentage of time tracking is lost: every gap between consecutive
/// arrivals (including the run start and end) longer than
/// `loss_threshold_steps` loses the excess.
pub fn utfr(arrivals: &[u64], loss_threshold_steps: u64, total_steps: u64) -> Result<f64, MetricsError> {
    if total_steps == 0 {
        return Err(MetricsError::ZeroSteps);
    }
    if arrivals.windows(2).any(|w| w[1] < w[0]) || arrivals.last().is_some_and(|a| *a > total_steps) {
        return Err(MetricsError::BadArrivals(total_steps));
    }
    let mut marks = Vec::with_capacity(arrivals.len() + 2);
    marks.push(0);
    marks.extend_from_slice(arrivals);
    marks.push(total_steps);
    let lost: u64 = marks.windows(2).map(|w| (w[1] - w[0]).saturating_sub(loss_threshold_steps)).sum();
    Ok(100.0 * lost.min(total_steps) as f64 / total_steps as f64)
}

/// Per-run KPIs before flattening into a [`RunRecord`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KpiRecord {
    pub completion_time_s: BTreeMap<u32, f64>,
    pub makespan_s: f64,
    pub stop_events: u32,
    pub rtt_samples_s: Vec<f64>,
    pub cta_samples_s: Vec<f64>,
    pub frame_arrival_steps: Vec<u64>,
}

/// One (scenario, method, seed) result with scalar metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario_id: String,
    pub method: String,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario_id: String,
    pub method: String,
    pub metric: String,
    pub runs: usize,
    pub median: f64,
    pub iqr: f64,
}

/// Median, averaging the two middle values for even counts.
pub fn median(samples: &[f64]) -> Result<f64, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Ok(if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 })
}

/// Interquartile range from nearest-rank Q1 and Q3.
pub fn iqr(samples: &[f64]) -> Result<f64, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(nearest_rank(&s, 0.75) - nearest_rank(&s, 0.25))
}

/// Median and IQR of every metric per method, sorted by method then metric.
pub fn run_summary(records: &[RunRecord]) -> Result<Vec<SummaryRow>, MetricsError> {
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    if let Some(other) = records.iter().find(|r| r.scenario_id != first.scenario_id) {
        return Err(MetricsError::MixedScenarios(first.scenario_id.clone(), other.scenario_id.clone()));
    }
    let mut grouped: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
    for r in records {
        for (k, v) in &r.metrics {
            grouped.entry((r.method.as_str(), k.as_str())).or_default().push(*v);
        }
    }
    grouped
        .into_iter()
        .map(|((method, metric), vals)| {
            Ok(SummaryRow {
                scenario_id: first.scenario_id.clone(),
                method: method.to_string(),
                metric: metric.to_string(),
                runs: vals.len(),
                median: median(&vals)?,
                iqr: iqr(&vals)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn straight(id: u32, n: u32) -> Trajectory {
        let cells: Vec<Cell> = (0..=n as i32).map(|x| Cell::new(x, 0)).collect();
        Trajectory { goal: *cells.last().unwrap(), path: SpaceTimePath::new(id, cells) }
    }

    #[test]
    fn completion_examples() {
        let none = StopLog::default();
        assert!((completion_time(&[straight(1, 10)], &none, 1.4).unwrap().max_s - 14.0).abs() < 1e-12);
        let two = completion_time(&[straight(1, 10), straight(2, 7)], &none, 1.4).unwrap();
        assert!((two.max_s - 14.0).abs() < 1e-12);
        assert!((two.per_robot_s[&2] - 9.8).abs() < 1e-12);
        let mut halts = StopLog::default();
        halts.record(1, 4, 1.4);
        assert!((completion_time(&[straight(1, 10)], &halts, 1.4).unwrap().max_s - 15.4).abs() < 1e-12);
    }

    #[test]
    fn unfinished_robot_is_named() {
        let mut t = straight(4, 3);
        t.goal = Cell::new(9, 9);
        assert_eq!(completion_time(&[t], &StopLog::default(), 1.4), Err(MetricsError::NotArrived(4)));
    }

    #[test]
    fn tail_examples() {
        assert_eq!(tail_stats(&[10.0, 20.0, 30.0]).unwrap(), TailStats { mean: 20.0, std: 10.0, p95: 30.0 });
        assert_eq!(tail_stats(&[4.0; 6]).unwrap(), TailStats { mean: 4.0, std: 0.0, p95: 4.0 });
        assert_eq!(tail_stats(&[7.0]).unwrap(), TailStats { mean: 7.0, std: 0.0, p95: 7.0 });
        assert_eq!(tail_stats(&[]), Err(MetricsError::Empty));
    }

    #[test]
    fn utfr_examples() {
        let every: Vec<u64> = (0..=100).collect();
        assert_eq!(utfr(&every, 2, 100).unwrap(), 0.0);
        let gapped: Vec<u64> = (0..=100).filter(|s| !(1..=11).contains(s)).collect();
        assert!((utfr(&gapped, 2, 100).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(utfr(&[], 2, 50).unwrap(), 96.0);
        assert_eq!(utfr(&[], 2, 0), Err(MetricsError::ZeroSteps));
        assert!(utfr(&[5, 3], 2, 10).is_err());
    }

    #[test]
    fn summary_examples() {
        let rec = |seed, v| RunRecord {
            scenario_id: "s".into(),
            method: "m".into(),
            seed,
            metrics: BTreeMap::from([("x".to_string(), v)]),
        };
        let one = run_summary(&[rec(1, 3.0)]).unwrap();
        assert_eq!((one[0].median, one[0].iqr), (3.0, 0.0));
        let odd = run_summary(&[rec(1, 5.0), rec(2, 1.0), rec(3, 3.0)]).unwrap();
        assert_eq!(odd[0].median, 3.0);
        let same = run_summary(&[rec(1, 2.0), rec(2, 2.0), rec(3, 2.0), rec(4, 2.0)]).unwrap();
        assert_eq!(same[0].iqr, 0.0);
        let mut other = rec(9, 1.0);
        other.scenario_id = "t".into();
        assert!(run_summary(&[rec(1, 1.0), other]).is_err());
        assert_eq!(median(&[1.0, 2.0, 3.0, 10.0]).unwrap(), 2.5);
    }

    proptest! {
        #[test]
        fn completion_monotone(n in 1u32..50, extra in 0u32..10, halt in 0.0f64..20.0, more in 0.0f64..5.0) {
            let mut h1 = StopLog::default();
            h1.record(1, 0, halt);
            let mut h2 = StopLog::default();
            h2.record(1, 0, halt + more);
            let a = completion_time(&[straight(1, n)], &h1, 1.4).unwrap().max_s;
            let b = completion_time(&[straight(1, n)], &h2, 1.4).unwrap().max_s;
            let c = completion_time(&[straight(1, n + extra)], &h1, 1.4).unwrap().max_s;
            prop_assert!(b >= a && c >= a);
        }

        #[test]
        fn p95_is_a_sample_above_p90(xs in proptest::collection::vec(0.0f64..100.0, 1..60)) {
            let t = tail_stats(&xs).unwrap();
            prop_assert!(xs.contains(&t.p95));
            let mut s = xs.clone();
            s.sort_by(f64::total_cmp);
            let r90 = ((0.9 * s.len() as f64).ceil() as usize).max(1);
            prop_assert!(t.p95 >= s[r90 - 1]);
        }

        #[test]
        fn utfr_bounds_and_threshold_monotonicity(
            mut arr in proptest::collection::vec(0u64..200, 0..40),
            th in 0u64..10,
        ) {
            arr.sort();
            let u = utfr(&arr, th, 200).unwrap();
            prop_assert!((0.0..=100.0).contains(&u));
            if th > 0 {
                prop_assert!(utfr(&arr, th - 1, 200).unwrap() >= u);
            }
            let mut marks = vec![0];
            marks.extend(&arr);
            marks.push(200);
            if marks.windows(2).all(|w| w[1] - w[0] <= th) {
                prop_assert_eq!(u, 0.0);
            }
        }
    }
}
