//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use r2x_core::linkadapt::gains_from_means;
use r2x_core::metrics::{median, RunRecord};
use r2x_core::orchestrator::{
    correct_loop, loop_feasible, rule_intent, select_sense_mode, validate_with, EngineError, IntentContext,
    IntentEngine, LoopBudget, ValidationError,
};
use r2x_core::planner::{detect_first_conflict, makespan, Objective};
use r2x_core::radio::Fairness;
use r2x_core::scenario::Scenario;
use r2x_core::sensing::{payload_bytes, vq_encode, Codebook, PayloadParams, Qos, SenseConfig, VitGrid};
use r2x_core::{plan, Cell, GridWorld, PlanConfig, RobotState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn load(name: &str) -> Scenario {
    Scenario::load(scenarios_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn run(name: &str) -> Vec<RunRecord> {
    let s = load(name);
    s.run_all(s.methods(), s.seeds()).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// `metric` per method, in seed order.
fn per_method(records: &[RunRecord], metric: &str) -> BTreeMap<String, Vec<f64>> {
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records {
        out.entry(r.method.clone()).or_default().push(r.metrics[metric]);
    }
    out
}

fn med(v: &[f64]) -> f64 {
    median(v).expect("non-empty")
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn latency_budget() -> Outcome {
    let (total, feasible) = loop_feasible(&LoopBudget::default());
    let ms = total * 1e3;
    check((ms - 1028.31).abs() <= 0.01 && feasible, format!("total {ms:.4} ms, feasible {feasible}"))
}

fn payload_identities() -> Outcome {
    let p = PayloadParams::default();
    let vq = |cols| payload_bytes(&SenseConfig::vq(VitGrid { rows: 1, cols }, Qos::BestEffort), &p).unwrap();
    let raw = payload_bytes(&SenseConfig::raw(Qos::Reliable), &p).unwrap();
    let feat = payload_bytes(&SenseConfig::semantic(512, 8, Qos::BestEffort), &p).unwrap();
    let bare = PayloadParams { tile_overhead_bytes: 0, ..PayloadParams::default() };
    let pure = payload_bytes(&SenseConfig::vq(VitGrid::ONE, Qos::BestEffort), &bare).unwrap();
    let got = [raw, feat, vq(1), vq(2), vq(3), pure];
    check(
        got == [6_220_800, 512, 1720, 3440, 5160, 1664],
        format!("raw {raw}, feature {feat}, vq {}/{}/{}, bits only {pure}", got[2], got[3], got[4]),
    )
}

fn baseline_ordering() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for s in ["s1", "s2", "s3", "s4"] {
        let m = per_method(&run(&format!("warehouse-{s}.json")), "completion_time_s");
        let [p, sc, scp, sg] = ["lorc_p", "lorc_sc", "lorc_sc_p", "stop_and_go"].map(|k| med(&m[k]));
        ok &= m.values().all(|v| v.len() == 20) && scp < sc && sc < sg && scp < p;
        lines.push(format!("{s}: sc_p {scp:.1} sc {sc:.1} stop_and_go {sg:.1} p {p:.1}"));
    }
    check(ok, lines.join("; "))
}

fn mcs_records() -> Vec<RunRecord> {
    run("mcs-ar1.json")
}

fn mcs_trends(records: &[RunRecord]) -> Outcome {
    let tp = per_method(records, "throughput_bps");
    let lat = per_method(records, "latency_s");
    let gain = |d: u32| {
        let base = format!("delayed{d}");
        gains_from_means(mean(&tp["predictive"]), mean(&tp[&base]), mean(&lat["predictive"]), mean(&lat[&base]))
            .unwrap()
            .tp_gain_pct
    };
    let g: Vec<(u32, f64)> = [1, 3, 5, 10, 20, 30].into_iter().map(|d| (d, gain(d))).collect();
    let positive = g[1..].iter().all(|(_, x)| *x > 0.0);
    let monotone = g[1..5].windows(2).all(|w| w[1].1 >= w[0].1);
    let near_one = (-5.0..=10.0).contains(&g[0].1);
    let seeds = tp["oracle"].len();
    let dominance = (0..seeds).all(|i| tp.values().all(|v| tp["oracle"][i] >= v[i]));
    let shown: Vec<String> = g.iter().map(|(d, x)| format!("d{d} {x:+.2}%")).collect();
    check(
        seeds == 20 && positive && monotone && near_one && dominance,
        format!("TP gain {}; oracle dominant on every trace: {dominance}", shown.join(", ")),
    )
}

fn reliability(records: &[RunRecord]) -> Outcome {
    let mass = per_method(records, "bler_mass_at_target");
    let pred = &mass["predictive"];
    let late = &mass["delayed30"];
    let pooled = mean(pred);
    let worst = pred.iter().cloned().fold(f64::INFINITY, f64::min);
    let wins = pred.iter().zip(late).filter(|(p, d)| d < p).count();
    check(
        pooled >= 0.8 && wins >= 16,
        format!("predictive mass <= 0.1: {pooled:.4} (lowest seed {worst:.4}); delayed30 below it on {wins}/20 seeds"),
    )
}

fn ladder() -> Outcome {
    let p = PayloadParams::default();
    let sweep: Vec<f64> = (0..=60).map(|i| -30.0 - 0.5 * i as f64).collect();
    let modes: Vec<SenseConfig> = sweep.iter().map(|r| select_sense_mode(*r)).collect();
    let mut seq: Vec<String> = Vec::new();
    let mut changes = Vec::new();
    for (i, m) in modes.iter().enumerate() {
        if seq.last() != Some(&m.label()) {
            seq.push(m.label());
            if i > 0 {
                changes.push(sweep[i - 1]);
            }
        }
    }
    let bytes: Vec<u64> = modes.iter().map(|m| payload_bytes(m, &p).unwrap()).collect();
    let nonincreasing = bytes.windows(2).all(|w| w[1] <= w[0]);
    let expected = ["jpeg_q80", "jpeg_q60", "vq_1x3", "vq_1x2", "vq_1x1"];
    // The last rung (>= -48 dBm) selects the same mode as the clamp below it.
    let last_rung =
        select_sense_mode(-48.0) == select_sense_mode(-48.5) && select_sense_mode(-48.0).label() == "vq_1x1";
    check(
        seq == expected && changes == [-39.0, -41.0, -43.0, -45.0] && last_rung && nonincreasing,
        format!("modes {seq:?}, lowest RSSI of each upper mode {changes:?}, -48 dBm rung holds vq_1x1"),
    )
}

fn followme_ordering() -> Outcome {
    let records = run("followme-corridor.json");
    let p95 = per_method(&records, "cta_p95_s");
    let utfr = per_method(&records, "utfr_pct");
    let orch_p95 = med(&p95["orchestrated"]);
    let orch_utfr = med(&utfr["orchestrated"]);
    let hq = med(&p95["jpeg_only_hq"]);
    let fixed: Vec<(String, f64)> =
        utfr.iter().filter(|(k, _)| k.as_str() != "orchestrated").map(|(k, v)| (k.clone(), med(v))).collect();
    let ok = orch_p95 < hq && fixed.iter().all(|(_, u)| orch_utfr < *u) && fixed.len() == 3;
    let shown: Vec<String> = fixed.iter().map(|(k, u)| format!("{k} {u:.2}%")).collect();
    check(
        ok,
        format!(
            "p95 CTA {:.1} ms vs jpeg_only_hq {:.1} ms; UTFR {orch_utfr:.2}% vs {}",
            orch_p95 * 1e3,
            hq * 1e3,
            shown.join(", ")
        ),
    )
}

/// Joint breadth-first search over both robots; optimal makespan or `None`.
fn joint_optimum(world: &GridWorld, a: &RobotState, b: &RobotState) -> Option<u32> {
    let moves = |c: Cell| {
        [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)]
            .into_iter()
            .map(move |(dx, dy)| Cell::new(c.x + dx, c.y + dy))
            .filter(|n| world.is_free(*n))
    };
    let start = (a.cell, b.cell);
    let goal = (a.goal, b.goal);
    let mut dist: HashMap<(Cell, Cell), u32> = HashMap::from([(start, 0)]);
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        let d = dist[&s];
        if s == goal {
            return Some(d);
        }
        for na in moves(s.0) {
            for nb in moves(s.1) {
                if na == nb || (na == s.1 && nb == s.0) || dist.contains_key(&(na, nb)) {
                    continue;
                }
                dist.insert((na, nb), d + 1);
                queue.push_back((na, nb));
            }
        }
    }
    None
}

fn planner_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = PlanConfig { objective: Objective::Makespan, priority_robot: None, min_time_gap_at_conflict: 0 };
    let (mut feasible, mut matched, mut infeasible) = (0, 0, 0);
    let mut mismatches = Vec::new();
    for _ in 0..200 {
        let mut cells: Vec<Cell> = Vec::new();
        let humans = rng.random_range(0..=2);
        while cells.len() < 4 + humans {
            let c = Cell::new(rng.random_range(0..5), rng.random_range(0..5));
            if !cells.contains(&c) {
                cells.push(c);
            }
        }
        let human_cells = &cells[4..];
        let horizon = 4 * (5 + 5);
        let forecasts: Vec<(Cell, u32)> =
            human_cells.iter().flat_map(|c| (0..=horizon).map(move |t| (*c, t))).collect();
        let robots = [RobotState::new(1, cells[0], cells[1]), RobotState::new(2, cells[2], cells[3])];
        let blocked = GridWorld::open(5, 5).unwrap().with_blocked(human_cells.iter().copied()).unwrap();
        let optimum = joint_optimum(&blocked, &robots[0], &robots[1]);
        let planned = plan(&GridWorld::open(5, 5).unwrap(), &robots, &forecasts, &cfg);
        match (optimum, planned) {
            (None, _) => infeasible += 1,
            (Some(opt), Ok(paths)) => {
                feasible += 1;
                let clean = detect_first_conflict(&paths).is_none()
                    && paths.iter().all(|p| p.cells.iter().all(|c| !human_cells.contains(c)));
                if clean && makespan(&paths) == opt {
                    matched += 1;
                } else {
                    mismatches.push(format!(
                        "{robots:?} humans {human_cells:?}: optimum {opt}, planned {}",
                        makespan(&paths)
                    ));
                }
            }
            (Some(opt), Err(e)) => {
                feasible += 1;
                mismatches.push(format!("{robots:?} humans {human_cells:?}: optimum {opt}, planner error {e}"));
            }
        }
    }
    let mut detail =
        format!("{matched}/{feasible} feasible instances optimal and conflict-free ({infeasible} infeasible)");
    if let Some(first) = mismatches.first() {
        detail.push_str(&format!("; first miss: {first}"));
    }
    check(matched == feasible && feasible > 0, detail)
}

fn brute_nearest(x: &[f64], rows: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, r) in rows.iter().enumerate() {
        let d: f64 = x.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

fn vq_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut agree, mut ties) = (0, 0);
    let n = 10_000;
    for i in 0..n {
        let k = rng.random_range(1..=48);
        let d = rng.random_range(1..=12);
        let lattice = i % 3 == 1;
        let draw = |rng: &mut ChaCha8Rng| -> f64 {
            if lattice {
                rng.random_range(-2..=2) as f64
            } else {
                rng.random_range(-1.0..1.0)
            }
        };
        let mut rows: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| draw(&mut rng)).collect()).collect();
        if i % 3 == 2 && k > 1 {
            let src = rng.random_range(0..k - 1);
            let dst = rng.random_range(src + 1..k);
            rows[dst] = rows[src].clone();
        }
        let x: Vec<f64> = (0..d).map(|_| draw(&mut rng)).collect();
        let want = brute_nearest(&x, &rows);
        let dist = |r: &Vec<f64>| -> f64 { x.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum() };
        if rows.iter().filter(|r| dist(r) == dist(&rows[want])).count() > 1 {
            ties += 1;
        }
        let cb = Codebook::new(rows).unwrap();
        if vq_encode(&x, &cb).unwrap() == want {
            agree += 1;
        }
    }
    check(agree == n, format!("{agree}/{n} pairs agree, {ties} with tied nearest codewords"))
}

const REFERENCE_PROMPT: &str =
    "Robot~2 is carrying high-priority medical supplies. The minimum quality of communication \
for each robot has to be guaranteed. The communication of Robot 2 is much more important than Robot 1. They have \
to move very safely.";

struct AlwaysInvalid(u32);

impl IntentEngine for AlwaysInvalid {
    fn propose(&mut self, _: &str, _: &IntentContext, _: &[ValidationError]) -> Result<String, EngineError> {
        self.0 += 1;
        Ok(r#"{"pp_config": {"objective": "fastest"}}"#.into())
    }
}

fn intent_round_trip() -> Outcome {
    let cfg = validate_with(&rule_intent(REFERENCE_PROMPT, &[1, 2]), &[1, 2]).map_err(|e| format!("{e:?}"))?;
    let fields_ok = cfg.pp.objective == Objective::SafetyFirst
        && cfg.pp.priority_robot == Some(2)
        && cfg.pp.min_time_gap_at_conflict == 3
        && cfg.ra.fairness == Fairness::MaxMin
        && cfg.ra.priority_weights == [0.3, 0.7];
    let mut engine = AlwaysInvalid(0);
    let out = correct_loop(&mut engine, REFERENCE_PROMPT, &IntentContext::for_robots(&[1, 2]), 3);
    let fallback_ok = out.fallback
        && out.attempts == 3
        && engine.0 == 3
        && out.config == r2x_core::orchestrator::fallback_config(&[1, 2]);
    check(
        fields_ok && fallback_ok,
        format!(
            "{:?}/robot_{:?}/gap {}/{:?}/{:?}; fallback after {} attempts",
            cfg.pp.objective,
            cfg.pp.priority_robot.unwrap_or(0),
            cfg.pp.min_time_gap_at_conflict,
            cfg.ra.fairness,
            cfg.ra.priority_weights,
            out.attempts
        ),
    )
}

fn gain_identities() -> Outcome {
    // Baseline means 20 and 3; proposal means scaled by the t-3 ratios.
    let g = gains_from_means(20.0 * 1.1414, 20.0, 3.0 * 0.8838, 3.0).unwrap();
    let same = gains_from_means(7.5, 7.5, 0.2, 0.2).unwrap();
    check(
        (g.tp_gain_pct - 14.14).abs() < 1e-9
            && (g.lat_reduction_pct - 11.62).abs() < 1e-9
            && same.tp_gain_pct == 0.0
            && same.lat_reduction_pct == 0.0,
        format!("{:.10}% / {:.10}%, self-comparison {:?}", g.tp_gain_pct, g.lat_reduction_pct, same),
    )
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_r2x");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut names: Vec<String> = std::fs::read_dir(scenarios_dir())
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json"))
        .collect();
    names.sort();
    for name in &names {
        let mut outputs = Vec::new();
        for round in 0..2 {
            let out = tmp.path().join(format!("{name}-{round}"));
            let status = Command::new(bin)
                .arg("run")
                .arg(scenarios_dir().join(name))
                .arg("--out")
                .arg(&out)
                .args(["--parallel", if round == 0 { "1" } else { "4" }])
                .env_remove("R2X_SEED")
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("{name}: {}", String::from_utf8_lossy(&status.stderr)));
            }
            let files: Vec<Vec<u8>> = ["results.jsonl", "summary.csv"]
                .iter()
                .map(|f| std::fs::read(out.join(f)).unwrap_or_default())
                .collect();
            outputs.push(files);
        }
        if outputs[0] != outputs[1] || outputs[0][0].is_empty() {
            return Err(format!("{name}: outputs differ between runs"));
        }
    }
    Ok(format!("{} scenarios byte-identical across two runs (1 and 4 workers)", names.len()))
}

fn main() {
    let mcs = std::cell::OnceCell::new();
    let criteria: Vec<(&str, Duration, Box<dyn Fn() -> Outcome>)> = vec![
        ("latency budget identity", Duration::from_secs(1), Box::new(latency_budget)),
        ("payload identities", Duration::from_secs(1), Box::new(payload_identities)),
        ("warehouse baseline ordering", Duration::from_secs(120), Box::new(baseline_ordering)),
        ("MCS policy trends", Duration::from_secs(60), Box::new(|| mcs_trends(mcs.get_or_init(mcs_records)))),
        ("BLER reliability target", Duration::from_secs(60), Box::new(|| reliability(mcs.get_or_init(mcs_records)))),
        ("sensing ladder conformance", Duration::from_secs(1), Box::new(ladder)),
        ("FollowMe ordering", Duration::from_secs(60), Box::new(followme_ordering)),
        ("planner joint-search equivalence", Duration::from_secs(120), Box::new(planner_oracle)),
        ("VQ brute-force equivalence", Duration::from_secs(30), Box::new(vq_oracle)),
        ("intent round trip", Duration::from_secs(1), Box::new(intent_round_trip)),
        ("gain identities", Duration::from_secs(1), Box::new(gain_identities)),
        ("determinism", Duration::from_secs(60), Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let took = t0.elapsed();
        let (verdict, detail) = match outcome {
            Ok(d) if took <= *limit => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; took {took:.2?}, limit {limit:?}")),
            Err(d) => ("FAIL", d),
        };
        if verdict == "FAIL" {
            failed += 1;
        }
        println!("{verdict} {:>2} {name} ({took:.2?}): {detail}", i + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
