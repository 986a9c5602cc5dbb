use std::path::Path;
use std::process::{Command, Output};

use fdbs_alloc::mapping3d::exhaustive_3d;
use fdbs_alloc::model::total_throughput;
use fdbs_alloc::scenario::{equal_power_allocation, equal_power_rates, ScenarioParams};
use fdbs_alloc::Scenario;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdbs-alloc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn gen(dir: &Path, size: &str, seed: &str) -> String {
    let path = dir.join(format!("scenario-{size}-{seed}.json"));
    let p = path.to_str().unwrap().to_owned();
    ok(&["gen", "--size", size, "--seed", seed, "--out", &p]);
    p
}

#[test]
fn gen_then_solve_twice_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = gen(dir.path(), "3,3,3", "21");
    for scheme in ["proposed", "random", "greedy", "equal", "joint"] {
        let a = ok(&["solve", &scenario, "--scheme", scheme, "--no-timing"]);
        let b = ok(&["solve", &scenario, "--scheme", scheme, "--no-timing"]);
        assert_eq!(a, b, "{scheme}");
        assert_eq!(a.lines().count(), 2);
    }
}

#[test]
fn exhaustive_solve_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen(dir.path(), "3,3,3", "5");
    let scenario = Scenario::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let (assignment, _) = exhaustive_3d(&equal_power_rates(&scenario).unwrap()).unwrap();
    let powers = equal_power_allocation(&scenario, &assignment).unwrap();
    let expected =
        total_throughput(&assignment, &powers, &scenario).unwrap() * ScenarioParams::default().bandwidth_hz / 3.0;

    let out = ok(&["solve", &path, "--scheme", "exhaustive", "--no-timing"]);
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1], "exhaustive");
    let reported: f64 = row[3].parse().unwrap();
    assert!(
        (reported - expected).abs() <= 1e-9 * expected,
        "{reported} vs {expected}"
    );
}

#[test]
fn unknown_scheme_is_a_usage_error() {
    let out = run(&["sweep", "--scheme", "optimal"]);
    assert!(!out.status.success());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("possible values"));
}

#[test]
fn errors_carry_a_category() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"M\": 2,\n  \"N\": oops\n}").unwrap();
    let out = run(&["solve", bad.to_str().unwrap(), "--scheme", "greedy"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error[parse]"), "{err}");
    assert!(err.contains("line 3"), "{err}");

    let out = run(&[
        "solve",
        dir.path().join("missing.json").to_str().unwrap(),
        "--scheme",
        "greedy",
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[io]"));

    let out = run(&["assign-compare", "--sweep", "20,10"]);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[validation]"));

    let out = run(&["assign-compare", "--size", "8,8,64", "--scheme", "exhaustive"]);
    assert!(
        out.status.success(),
        "assign-compare ignores --scheme and omits exhaustive at this size"
    );
}

#[test]
fn config_file_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{
  "experiment": "sweep",
  "scenario": {"M": 2, "N": 2, "K": 4},
  "bs_power_sweep_dbm": [10, 20],
  "trials": 2,
  "seed": 7,
  "scheme": "greedy",
  "output_format": "json",
  "record_runtime": false
}"#,
    )
    .unwrap();
    let out_path = dir.path().join("out.json");
    ok(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0]["seed"], 7);
    assert_eq!(rows[1]["seed"], 8);
    assert!(rows
        .iter()
        .all(|r| r["scheme"] == "greedy" && r["runtime_ms"].is_null()));

    let csv = ok(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--format",
        "csv",
        "--trials",
        "1",
        "--seed",
        "3",
    ]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "bs_power_dbm,scheme,seed,throughput_bps,runtime_ms,duality_gap"
    );
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("10,greedy,3,"));
}

#[test]
fn gen_round_trips_through_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen(dir.path(), "2,3,5", "11");
    let text = std::fs::read_to_string(&path).unwrap();
    let scenario = Scenario::from_json(&text).unwrap();
    assert_eq!((scenario.num_uue, scenario.num_due, scenario.num_sub), (2, 3, 5));
    assert_eq!(scenario.to_json().unwrap().trim_end(), text.trim_end());
}
