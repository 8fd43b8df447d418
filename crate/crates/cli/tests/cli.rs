use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scenario(name: &str) -> PathBuf {
    root().join("scenarios").join(name)
}

fn r2x(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_r2x")).args(args).env_remove("R2X_SEED").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn golden_two_method_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s1");
    let s1 = scenario("warehouse-s1.json");
    let o = r2x(&[
        "run",
        s1.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--methods",
        "stop_and_go,lorc_sc_p",
        "--seeds",
        "0",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/warehouse-s1-golden");
    for f in ["results.jsonl", "summary.csv"] {
        assert_eq!(fs::read_to_string(out.join(f)).unwrap(), fs::read_to_string(golden.join(f)).unwrap(), "{f}");
    }
    assert_eq!(fs::read_to_string(out.join("results.jsonl")).unwrap().lines().count(), 2);
}

#[test]
fn unknown_method_exits_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let s1 = scenario("warehouse-s1.json");
    let o = r2x(&["run", s1.to_str().unwrap(), "--out", tmp.path().to_str().unwrap(), "--methods", "teleport"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("\"teleport\""), "{}", stderr(&o));
    assert!(!tmp.path().join("results.jsonl").exists());

    let text = fs::read_to_string(&s1).unwrap().replace("\"lorc_sc\",", "\"lorc_xx\",");
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, text).unwrap();
    let o = r2x(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("methods: unknown method \"lorc_xx\""), "{}", stderr(&o));
}

#[test]
fn parse_errors_name_file_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("broken.json");
    fs::write(&bad, "{\n  \"schema_version\": 1,\n  \"id\": \"x\",\n  \"kind\": \"warehouse\",\n  \"colour\": 3\n}\n")
        .unwrap();
    let o = r2x(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("broken.json:5:"), "{err}");
    assert!(err.contains("colour"), "{err}");
}

#[test]
fn missing_file_is_a_runtime_failure() {
    let o = r2x(&["validate", "/nonexistent/scenario.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn seed_env_overrides_file_but_not_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let fm = scenario("followme-corridor.json");
    let run = |out: &Path, env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_r2x"));
        cmd.args(["run", fm.to_str().unwrap(), "--out", out.to_str().unwrap(), "--methods", "orchestrated"]);
        cmd.env_remove("R2X_SEED");
        if let Some(s) = env {
            cmd.env("R2X_SEED", s);
        }
        if let Some(s) = flag {
            cmd.args(["--seeds", s]);
        }
        assert!(cmd.output().unwrap().status.success());
        let text = fs::read_to_string(out.join("results.jsonl")).unwrap();
        text.lines()
            .map(|l| l.split("\"seed\":").nth(1).unwrap().split(',').next().unwrap().to_string())
            .collect::<Vec<_>>()
    };
    assert_eq!(run(&tmp.path().join("a"), Some("7,3"), None), ["3", "7"]);
    assert_eq!(run(&tmp.path().join("b"), Some("7,3"), Some("11")), ["11"]);
    assert_eq!(run(&tmp.path().join("c"), None, None).len(), 20);
}

#[test]
fn compare_ranks_and_rejects_mixed_scenarios() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let s1 = scenario("warehouse-s1.json");
    let fm = scenario("followme-corridor.json");
    assert!(r2x(&["run", s1.to_str().unwrap(), "--out", a.to_str().unwrap(), "--seeds", "0,1,2"]).status.success());
    let o = r2x(&["compare", a.to_str().unwrap()]);
    assert!(o.status.success());
    let table = String::from_utf8(o.stdout).unwrap();
    let first = table.lines().nth(2).unwrap();
    assert!(first.contains("lorc_sc_p"), "{table}");

    assert!(r2x(&["run", fm.to_str().unwrap(), "--out", b.to_str().unwrap(), "--seeds", "0"]).status.success());
    let o = r2x(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("scenario ids differ"), "{}", stderr(&o));
}

#[test]
fn every_bundled_scenario_validates() {
    for entry in fs::read_dir(root().join("scenarios")).unwrap() {
        let path = entry.unwrap().path();
        let o = r2x(&["validate", path.to_str().unwrap()]);
        assert!(o.status.success(), "{}: {}", path.display(), stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains(": ok ("));
    }
}
