//! Fixtures shared by the benchmarks.

use r2x_core::linkadapt::LinkTrace;
use r2x_core::radio::{sample_trace, PathGainMap, SyntheticGain, TraceParams};
use r2x_core::{Cell, GridWorld, RobotState};

/// An open `width` x 14 floor with two shelf rows broken by a cross aisle
/// every nine columns.
pub fn shelf_world(width: u32) -> GridWorld {
    let mut shelves = Vec::new();
    for x in 4..width as i32 - 4 {
        if (x - 8) % 9 == 0 {
            continue;
        }
        for y in [3, 4, 9, 10] {
            shelves.push(Cell::new(x, y));
        }
    }
    GridWorld::open(width, 14).unwrap().with_blocked(shelves).unwrap()
}

/// Two robots crossing the floor in opposite directions along the centre aisle.
pub fn crossing_robots(width: u32) -> [RobotState; 2] {
    let far = width as i32 - 3;
    [RobotState::new(1, Cell::new(2, 6), Cell::new(far, 6)), RobotState::new(2, Cell::new(far, 7), Cell::new(2, 7))]
}

/// Humans pacing up and down each cross aisle, as (cell, step) pairs.
pub fn aisle_forecasts(width: u32, horizon: u32) -> Vec<(Cell, u32)> {
    let mut out = Vec::new();
    for x in (8..width as i32 - 4).step_by(9) {
        for t in 0..=horizon {
            let phase = (t % 20) as i32;
            let y = if phase < 10 { 2 + phase } else { 21 - phase };
            out.push((Cell::new(x, y.clamp(0, 13)), t));
        }
    }
    out
}

/// A shadowed link trace of `steps` steps along a straight corridor away
/// from the access point.
pub fn corridor_trace(steps: usize, seed: u64) -> LinkTrace {
    let world = GridWorld::open(30, 3).unwrap();
    let gain = SyntheticGain {
        access_points: vec![Cell::new(0, 1)],
        ref_gain_db: -60.0,
        exponent: 2.5,
        dead_zones: vec![],
        shadowing_rho: 0.99,
        shadowing_sigma_db: 6.0,
    };
    let map = PathGainMap::synthetic(&world, &gain).unwrap();
    let cells: Vec<Cell> = (0..steps).map(|t| Cell::new(1 + (t / 10 % 28) as i32, 1)).collect();
    let params = TraceParams { tx_power_dbm: 8.0, noise_dbm: -95.0 };
    let map_snr_db = cells.iter().map(|c| params.tx_power_dbm + map.gain_at(*c).unwrap() - params.noise_dbm).collect();
    LinkTrace { states: sample_trace(&map, &cells, &params, seed).unwrap(), map_snr_db: Some(map_snr_db) }
}
