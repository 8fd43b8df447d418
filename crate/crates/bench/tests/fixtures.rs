use r2x_bench::{aisle_forecasts, corridor_trace, crossing_robots, shelf_world};

#[test]
fn fixtures_are_valid_inputs() {
    for width in [26, 41, 56] {
        let world = shelf_world(width);
        for r in crossing_robots(width) {
            assert!(world.check_free(r.cell).is_ok() && world.check_free(r.goal).is_ok());
        }
        assert!(aisle_forecasts(width, 40).iter().all(|(c, _)| world.check_free(*c).is_ok()));
    }
    let trace = corridor_trace(100, 0);
    assert_eq!(trace.len(), 100);
    assert_eq!(trace.map_snr_db.as_ref().map(Vec::len), Some(100));
}
