//! End-to-end checks through the public API only.

use std::path::{Path, PathBuf};

use r2x_core::orchestrator::select_sense_mode;
use r2x_core::planner::{detect_first_conflict, Objective, PlanError};
use r2x_core::report::{read_results, write_results};
use r2x_core::scenario::Scenario;
use r2x_core::sensing::{payload_bytes, PayloadParams};
use r2x_core::{plan, Cell, GridWorld, PlanConfig, RobotState, SpaceTimePath};

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn corridor_swap(bay_x: usize) -> (Vec<RobotState>, Result<Vec<SpaceTimePath>, PlanError>) {
    let mut bottom = vec!['#'; 7];
    bottom[bay_x] = '.';
    let map = format!("7 2 1.0\n.......\n{}", bottom.iter().collect::<String>());
    let world: GridWorld = map.parse().unwrap();
    let robots = vec![
        RobotState::new(1, Cell::new(0, 0), Cell::new(6, 0)),
        RobotState::new(2, Cell::new(6, 0), Cell::new(0, 0)),
    ];
    let cfg = PlanConfig { objective: Objective::Makespan, priority_robot: None, min_time_gap_at_conflict: 0 };
    let out = plan(&world, &robots, &[], &cfg);
    (robots, out)
}

#[test]
fn robots_swap_ends_of_a_corridor_through_a_bay() {
    let (robots, out) = corridor_swap(4);
    let paths = out.unwrap();
    assert!(detect_first_conflict(&paths).is_none());
    for (p, r) in paths.iter().zip(&robots) {
        assert_eq!(p.cells.first(), Some(&r.cell));
        assert_eq!(p.cells.last(), Some(&r.goal));
    }
    assert!(paths.iter().any(|p| p.cells.contains(&Cell::new(4, 1))));
}

/// The leading robot never waits, so a bay the other robot cannot reach in
/// time leaves no prioritized solution even though a joint one exists.
#[test]
fn unreachable_bay_is_reported_infeasible() {
    let (_, out) = corridor_swap(3);
    assert!(matches!(out, Err(PlanError::Infeasible { .. })), "{out:?}");
}

#[test]
fn payload_shrinks_down_the_ladder() {
    let params = PayloadParams::default();
    let sizes: Vec<u64> =
        (-55..=-30).rev().map(|r| payload_bytes(&select_sense_mode(r as f64), &params).unwrap()).collect();
    assert!(sizes.windows(2).all(|w| w[0] >= w[1]), "{sizes:?}");
    assert!(sizes[0] > sizes[sizes.len() - 1]);
}

#[test]
fn oracle_outruns_ideal_on_the_bundled_route() {
    let s = Scenario::load(bundled("mcs-ar1.json")).unwrap();
    let runs = s.run_all(&["ideal".to_string(), "oracle".to_string()], &[0, 1]).unwrap();
    for seed in [0, 1] {
        let tp = |m: &str| runs.iter().find(|r| r.method == m && r.seed == seed).unwrap().metrics["throughput_bps"];
        assert!(tp("oracle") >= tp("ideal"), "seed {seed}");
    }
}

#[test]
fn warehouse_results_round_trip_through_disk() {
    let s = Scenario::load(bundled("warehouse-s1.json")).unwrap();
    let mut runs = s.run_all(s.methods(), &[3]).unwrap();
    assert!(runs.iter().all(|r| r.metrics["finished"] == 1.0));
    let tmp = tempfile::tempdir().unwrap();
    write_results(tmp.path(), &mut runs).unwrap();
    assert_eq!(read_results(tmp.path()).unwrap(), runs);
}
