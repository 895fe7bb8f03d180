//! End-to-end exercise of the `terra` binary at smoke scale: every
//! stage runs in sequence inside a temporary directory, consuming the
//! artifacts of the previous stage.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn terra(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_terra"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn terra")
}

fn run_ok(args: &[&str], out: &Path) -> String {
    let result = terra(args, out);
    assert!(
        result.status.success(),
        "terra {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&result.stdout),
        String::from_utf8_lossy(&result.stderr)
    );
    String::from_utf8_lossy(&result.stdout).into_owned()
}

#[test]
fn pipeline_runs_end_to_end_at_smoke_scale() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg = repo_config("smoke.toml");
    let cfg = cfg.to_str().unwrap();

    run_ok(&["gen-data", "--config", cfg], out);
    assert!(out.join("dataset.csv").is_file());
    assert!(out.join("dataset.json").is_file());

    run_ok(&["train", "--config", cfg], out);
    assert!(out.join("model.json").is_file());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("training_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["members"].as_array().unwrap().len(), 2);

    run_ok(&["simulate", "--config", cfg], out);
    assert!(out.join("trace.csv").is_file());
    assert!(out.join("trace.json").is_file());

    run_ok(&["estimate", "--config", cfg], out);
    let estimate: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("estimate.json")).unwrap()).unwrap();
    // 4 s drive at 20 ms → 200 filter steps.
    assert_eq!(estimate["steps"], 200);
    let n_hat = estimate["n_hat"].as_f64().unwrap();
    assert!((0.3..=1.3).contains(&n_hat), "n_hat = {n_hat}");

    run_ok(&["evaluate", "--config", cfg], out);
    let evaluation: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("evaluation.json")).unwrap())
            .unwrap();
    assert!(evaluation["force"]["combined"].as_f64().unwrap() > 0.0);
    assert!(evaluation["horizon_true"]["windows"].as_u64().unwrap() > 0);

    run_ok(&["report", "--config", cfg], out);
    for table in ["force_rmse.csv", "horizon_mse.csv"] {
        assert!(out.join("tables").join(table).is_file(), "missing {table}");
    }
    for plot in ["n_estimate.svg", "forces.svg", "trajectory.svg"] {
        let path = out.join("plots").join(plot);
        assert!(path.is_file(), "missing {plot}");
        let head = std::fs::read_to_string(&path).unwrap();
        assert!(head.contains("<svg"), "{plot} is not an SVG");
    }
}

#[test]
fn bench_reports_a_mean_step_time() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = run_ok(&["bench", "--steps", "50"], dir.path());
    let mean_ms: f64 = stdout
        .split("mean ")
        .nth(1)
        .and_then(|rest| rest.split_whitespace().next())
        .expect("bench output names a mean")
        .parse()
        .expect("mean is numeric");
    assert!(mean_ms > 0.0);
}

#[test]
fn stages_fail_cleanly_without_their_inputs() {
    let dir = tempfile::tempdir().unwrap();
    for stage in ["train", "estimate", "evaluate", "report"] {
        let result = terra(&[stage], dir.path());
        assert!(!result.status.success(), "{stage} should fail in an empty dir");
        let stderr = String::from_utf8_lossy(&result.stderr);
        assert!(stderr.contains("error:"), "{stage} stderr: {stderr}");
    }
}

#[test]
fn invalid_config_is_rejected_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[estimator]\nn0 = 3.0\n").unwrap();
    let result = terra(&["gen-data", "--config", bad.to_str().unwrap()], dir.path());
    assert!(!result.status.success());
    assert!(String::from_utf8_lossy(&result.stderr).contains("sinkage exponent"));
}
