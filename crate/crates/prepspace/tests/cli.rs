//! End-to-end tests of the `prepspace` binary.

use std::fs;
use std::path::Path;
use std::process::Command;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_prepspace"))
}

fn write_config(dir: &Path, json: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path
}

#[test]
fn evolve_with_diagonal_hamiltonian_keeps_probabilities_constant() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{
            "dimension": 3,
            "hamiltonian": {"type": "diagonal", "values": [0.0, 1.0, 2.5]},
            "initial": {"type": "explicit", "p": [0.2, 0.3, 0.5], "phi": [0.0, 1.0, 2.0]},
            "seed": 11
        }"#,
    );
    let out = dir.path().join("run");
    let status = binary()
        .args(["evolve", "--config"])
        .arg(&config)
        .args(["--t-final", "1.0", "--step", "0.01", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert_eq!(header, "t,p_1,p_2,p_3,phi_1,phi_2,phi_3,energy");
    let mut rows = 0;
    for line in lines {
        let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(fields.len(), 8);
        assert!((fields[1] - 0.2).abs() < 1e-10, "p_1 drifted: {line}");
        assert!((fields[2] - 0.3).abs() < 1e-10);
        assert!((fields[3] - 0.5).abs() < 1e-10);
        rows += 1;
    }
    assert_eq!(rows, 101);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema"], "prepspace-report/1");
    assert!(summary["oracle_fidelity"].as_f64().unwrap() > 1.0 - 1e-8);
}

#[test]
fn statmech_two_level_beta_is_ln_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{
            "dimension": 2,
            "hamiltonian": {"type": "diagonal", "values": [0.0, 1.0]},
            "monte_carlo": {"samples": 20000},
            "seed": 4
        }"#,
    );
    let out = dir.path().join("run");
    let status = binary()
        .args(["statmech", "--config"])
        .arg(&config)
        .args(["--mean", "0.25", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("statmech.json")).unwrap()).unwrap();
    let beta = report["beta"].as_f64().unwrap();
    assert!((beta - 3.0f64.ln()).abs() < 1e-10, "beta = {beta}");
    assert!(report["bridge_max_residual_t0"].as_f64().unwrap() < 1e-9);
}

#[test]
fn statmech_infeasible_mean_exits_with_code_four() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{
            "dimension": 2,
            "hamiltonian": {"type": "diagonal", "values": [0.0, 1.0]},
            "seed": 4
        }"#,
    );
    let out = dir.path().join("run");
    let output = binary()
        .args(["statmech", "--config"])
        .arg(&config)
        .args(["--mean", "1.5", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4));
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let output = binary()
        .args(["verify", "--suite", "nonsense", "--n", "3", "--seed", "0", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn malformed_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "{ not json");
    let out = dir.path().join("run");
    let output = binary()
        .args(["evolve", "--config"])
        .arg(&config)
        .args(["--t-final", "1.0", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

fn strip_wall_clock(report: &str) -> serde_json::Value {
    let mut value: serde_json::Value = serde_json::from_str(report).unwrap();
    value.as_object_mut().unwrap().remove("wall_clock_s");
    value
}

#[test]
fn verify_reports_are_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("report_{threads}.json"));
        let status = binary()
            .env("PREPSPACE_THREADS", threads)
            .args(["verify", "--suite", "statmech", "--n", "2", "--seed", "13"])
            .args(["--samples", "20000", "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        reports.push(strip_wall_clock(&fs::read_to_string(&out).unwrap()));
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn verify_geometry_suite_passes_and_reports_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let status = binary()
        .args(["verify", "--suite", "geometry", "--n", "3", "--seed", "2", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["schema"], "prepspace-report/1");
    assert_eq!(report["overall_pass"], true);
    assert!(report["checks"].as_array().unwrap().len() >= 2);
}
