use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use naim_scenario::output::verify_manifest;

fn naim(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_naim"));
    cmd.args(args).env_remove("NAIM_OUT_DIR");
    if let Some(dir) = out_env {
        cmd.env("NAIM_OUT_DIR", dir);
    }
    cmd.output().expect("run naim")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).expect("write scenario");
    p.display().to_string()
}

const SMALL: &str = r#"{
  "name": "small",
  "manifold": { "kind": "sphere" },
  "field": { "kind": "rotation", "axis": [0, 0, 1] },
  "epsilon": 0.8,
  "initial_conditions": [ { "q": [0.6, 0, 0.8], "v": [0, 1, 0] } ],
  "t_final": 1.0
}"#;

#[test]
fn lists_bundled_scenarios() {
    let o = naim(&["list-scenarios"], None);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).expect("utf8");
    for name in [
        "fig1",
        "so3_jets",
        "so3_covariant_oracle",
        "underactuated",
        "sweep_demo",
    ] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
}

#[test]
fn simulate_writes_the_csv_contract() {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = dir.path().join("fig1");
    let o = naim(&["simulate", "fig1", "--out", out.to_str().expect("path")], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let traj = fs::read_to_string(out.join("traj_00.csv")).expect("trajectory");
    assert_eq!(traj.lines().next(), Some("t,q1,q2,q3,v1,v2,v3"));
    assert_eq!(traj.lines().count(), 1502);
    let res = fs::read_to_string(out.join("residual_05.csv")).expect("residual");
    assert_eq!(res.lines().next(), Some("t,res_norm_sq"));
    assert!(out.join("reference_05.csv").exists());
    assert!(out.join("summary.json").exists());
    assert!(verify_manifest(&out).expect("manifest").is_empty());
}

#[test]
fn rotation_group_rows_are_flattened_row_major() {
    let dir = tempfile::tempdir().expect("tempdir");
    let o = naim(&["simulate", "so3_jets"], Some(dir.path()));
    assert!(o.status.success(), "{}", stderr(&o));
    let traj = fs::read_to_string(dir.path().join("traj_00.csv")).expect("trajectory written to NAIM_OUT_DIR");
    let mut lines = traj.lines();
    let header: Vec<&str> = lines.next().expect("header").split(',').collect();
    assert_eq!(header.len(), 19);
    assert_eq!((header[1], header[9], header[10], header[18]), ("q1", "q9", "v1", "v9"));
    // At t = 0: R = I and V = R·hat(e1), whose (2,1) entry is 1.
    let first: Vec<f64> = lines
        .next()
        .expect("row")
        .split(',')
        .map(|x| x.parse().expect("number"))
        .collect();
    assert_eq!(&first[1..10], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    assert_eq!(first[10 + 7], 1.0);
    assert_eq!(first[10 + 5], -1.0);
}

#[test]
fn parse_errors_exit_with_two() {
    let dir = tempfile::tempdir().expect("tempdir");
    let bad = write(
        dir.path(),
        "bad.json",
        &SMALL.replace("\"t_final\": 1.0", "\"t_final\": true"),
    );
    let o = naim(&["simulate", &bad, "--out", dir.path().to_str().expect("path")], None);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("line 7") && msg.contains("t_final"), "{msg}");

    let o = naim(&["simulate", "no-such-scenario"], Some(dir.path()));
    assert_eq!(o.status.code(), Some(2));

    let o = naim(&["sweep", "sweep_demo", "--eps", ""], Some(dir.path()));
    assert_eq!(o.status.code(), Some(2));
    let o = naim(&["sweep", "sweep_demo", "--eps", "0.5,-1"], Some(dir.path()));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn numeric_errors_exit_with_three() {
    let dir = tempfile::tempdir().expect("tempdir");
    let text = SMALL
        .replace("\"v\": [0, 1, 0]", "\"v\": [0, 40, 0]")
        .replace("\"t_final\": 1.0", "\"t_final\": 1.0, \"dt\": 0.1");
    let path = write(dir.path(), "fast.json", &text);
    let o = naim(&["simulate", &path], Some(dir.path()));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("at t = "));
}

#[test]
fn strict_diagnose_exits_with_four_on_failed_certificates() {
    let dir = tempfile::tempdir().expect("tempdir");
    let text = SMALL
        .replace(
            "{ \"kind\": \"rotation\", \"axis\": [0, 0, 1] }",
            "{ \"kind\": \"linear_projected\", \"matrix\": [[-1, 0, 0], [0, 0, 0], [0, 0, 1]] }",
        )
        .replace(
            "\"t_final\": 1.0",
            "\"t_final\": 1.0, \"diagnostics\": { \"bunching\": { \"horizons\": [1.0], \"n_base\": 4, \"epsilon\": 1000 } }",
        );
    let path = write(dir.path(), "hyper.json", &text);
    let out = dir.path().join("diag");
    let out = out.to_str().expect("path");
    let lenient = naim(&["diagnose", &path, "--out", out], None);
    assert_eq!(lenient.status.code(), Some(0), "{}", stderr(&lenient));
    let strict = naim(&["diagnose", &path, "--strict", "--out", out], None);
    assert_eq!(strict.status.code(), Some(4), "{}", stderr(&strict));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("diag/diagnostics.json")).expect("report"))
            .expect("json");
    assert_eq!(report["passed"], false);
    assert!(dir.path().join("diag/certificates.csv").exists());
}

#[test]
fn sweep_and_diagnose_succeed_on_bundled_scenarios() {
    let dir = tempfile::tempdir().expect("tempdir");
    let o = naim(
        &["sweep", "sweep_demo", "--eps", "0.5,2"],
        Some(&dir.path().join("sweep")),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = fs::read_to_string(dir.path().join("sweep/sweep.csv")).expect("sweep.csv");
    assert_eq!(rows.lines().count(), 3);
    let o = naim(
        &["diagnose", "so3_covariant_oracle", "--strict"],
        Some(&dir.path().join("diag")),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(verify_manifest(&dir.path().join("diag")).expect("manifest").is_empty());
}
