use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn jae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jae"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn count_only_reports_grid_and_basis_sizes() {
    let out = jae(&[
        "build-jmm",
        "--count-only",
        "--samples",
        "5,5,5,5,5,7,7,7",
        "--degree",
        "5",
    ]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["sample_count"], 1_071_875);
    assert_eq!(v["basis_size"], 1287);
}

#[test]
fn build_then_run_with_the_saved_mapping() {
    let dir = tempfile::tempdir().unwrap();
    let jmm = dir.path().join("elbow.jmm.json");
    let report = dir.path().join("report.json");
    let out = jae(&[
        "build-jmm",
        "--model",
        "demo:elbow1",
        "--joints",
        "elbow",
        "--muscles",
        "flexor,extensor",
        "--samples",
        "9",
        "--out",
        path(&jmm),
        "--report",
        path(&report),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rep["sample_count"], 9);
    assert_eq!(rep["basis_size"], 5);
    for r in rep["residuals"].as_array().unwrap() {
        assert!(r["max_error"].as_f64().unwrap() < 1e-4);
    }

    let log = dir.path().join("run.csv");
    let arg = format!("elbow={}", path(&jmm));
    let out = jae(&[
        "run",
        "--model",
        "demo:elbow1",
        "--jmm",
        &arg,
        "--ticks",
        "200",
        "--seed",
        "4",
        "--out",
        path(&log),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = stdout_json(&out);
    assert_eq!(summary["ticks"], 200);
    assert!(
        summary["joints"][0]["rmse_final_half_deg"]
            .as_f64()
            .unwrap()
            < 1.0
    );

    let plots = dir.path().join("plots");
    let out = jae(&["plot", "--log", path(&log), "--out", path(&plots)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["figures"].as_array().unwrap().len(), 2);
    assert!(plots.join("plot.py").exists());
}

#[test]
fn flags_override_the_experiment_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.json");
    std::fs::write(
        &config,
        r#"{ "model": "demo:planar2", "trajectory": { "ticks": 80, "seed": 2 }, "ekf": { "mode": "relative" } }"#,
    )
    .unwrap();
    let log = dir.path().join("a.csv");
    let summary = dir.path().join("s.json");
    let out = jae(&[
        "--sequential",
        "run",
        "--config",
        path(&config),
        "--ticks",
        "40",
        "--mode",
        "absolute",
        "--out",
        path(&log),
        "--summary",
        path(&summary),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(s["ticks"], 40);
    let text = std::fs::read_to_string(&log).unwrap();
    assert!(text.contains("# mode=absolute"));
    assert!(text.contains("# seed=2"));
}

#[test]
fn runs_are_identical_across_thread_policies() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let common = [
        "--model",
        "demo:upper6",
        "--fit-samples",
        "5",
        "--fit-degree",
        "3",
        "--ticks",
        "60",
    ];
    let mut first = vec!["run"];
    first.extend(common);
    first.extend(["--out", path(&a)]);
    let mut second = vec!["--sequential", "run"];
    second.extend(common);
    second.extend(["--out", path(&b)]);
    assert_eq!(jae(&first).status.code(), Some(0));
    assert_eq!(jae(&second).status.code(), Some(0));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn invalid_groups_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let groups = dir.path().join("groups.json");
    std::fs::write(
        &groups,
        r#"{ "groups": [
            { "name": "a", "estimated_joints": ["x"], "borrowed_joints": [], "muscles": ["m1"], "jmm": "a.json" },
            { "name": "b", "estimated_joints": ["x"], "borrowed_joints": ["y"], "muscles": ["m2"], "jmm": "b.json" }
        ] }"#,
    )
    .unwrap();
    let out = jae(&["validate-groups", "--groups", path(&groups)]);
    assert_eq!(out.status.code(), Some(1));
    let v = stdout_json(&out);
    assert_eq!(v["valid"], false);
    assert!(v["violations"].as_array().unwrap().len() >= 2);
}

#[test]
fn bundled_groups_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/models");
    let out = jae(&[
        "validate-groups",
        "--groups",
        path(&root.join("upper6.groups.json")),
        "--model",
        "demo:upper6",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    assert_eq!(stdout_json(&out)["valid"], true);
}

#[test]
fn estimation_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("x.csv");
    let out = jae(&[
        "run",
        "--model",
        "demo:elbow1",
        "--ticks",
        "20",
        "--max-innovation-condition",
        "1.000001",
        "--out",
        path(&log),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tick"));
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = jae(&[
        "run",
        "--model",
        "demo:nope",
        "--out",
        path(&dir.path().join("x.csv")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let out = jae(&[
        "plot",
        "--log",
        path(&dir.path().join("missing.csv")),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
}
