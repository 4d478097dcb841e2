use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn liekoop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_liekoop"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(path: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("timestamp");
    v
}

#[test]
fn list_names_every_system() {
    let out = liekoop(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for id in [
        "torus-rotation",
        "torus-rescaled",
        "u1-sine",
        "so3-circle",
        "so3-wobble",
        "heisenberg-line",
        "noncollinear",
    ] {
        assert!(text.contains(id), "{id}");
    }
}

#[test]
fn verify_passes_with_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let csv = dir.path().join("r.csv");
    let out = liekoop(&[
        "verify",
        "--system",
        "torus-rotation",
        "--out",
        json.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = report(&json);
    assert_eq!(r["passed"], true);
    let w = r["omega_hat"].as_array().unwrap();
    assert!((w[0].as_f64().unwrap() - 1.0).abs() < 1e-7);
    assert!((w[1].as_f64().unwrap() - std::f64::consts::SQRT_2).abs() < 1e-7);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 64 * 64 + 256);
    assert!(text.starts_with("index,theta1,theta2,dzv_1,dzv_2,deviation\n"));
}

#[test]
fn failing_verdict_exits_two() {
    let out = liekoop(&["verify", "--system", "u1-sine"]);
    assert_eq!(out.status.code(), Some(2));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["passed"], false);
}

#[test]
fn errors_exit_one() {
    assert_eq!(
        liekoop(&["verify", "--system", "nope"]).status.code(),
        Some(1)
    );
    assert_eq!(liekoop(&["verify", "--bogus"]).status.code(), Some(1));
    assert_eq!(
        liekoop(&["verify", "--system", "torus-rotation", "--tol", "-1"])
            .status
            .code(),
        Some(1)
    );
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.cfg");
    std::fs::write(&empty, "").unwrap();
    let out = liekoop(&["verify", "--config", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "id = \"x\"\ngroup = \"su5\"\n[chart]\ndim = 1\n[field]\nkind = \"constant\"\nvalues = [1.0]\n[map]\nkind = \"constant\"\ncoords = [0.0]\n").unwrap();
    let out = liekoop(&["verify", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`group`"));
}

#[test]
fn config_file_runs_like_the_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sys.cfg");
    std::fs::write(&cfg, include_str!("../../core/catalog/so3-circle.cfg")).unwrap();
    let out = liekoop(&["residual", "--config", cfg.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(r["residual"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn rescale_and_lift_check() {
    let out = liekoop(&["rescale", "--system", "torus-rescaled"]);
    assert_eq!(out.status.code(), Some(0));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["rescalable"], true);
    assert!(!r["alpha"].as_array().unwrap().is_empty());

    let out = liekoop(&["rescale", "--system", "noncollinear"]);
    assert_eq!(out.status.code(), Some(2));

    let out = liekoop(&["lift-check", "--system", "so3-wobble"]);
    assert_eq!(out.status.code(), Some(0));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(r["max_gap_tilde"].as_f64().unwrap() <= 1e-6);
    assert!(r["max_gap_canonical"].as_f64().unwrap() > 1e-3);
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let json = dir.path().join(format!("r{k}.json"));
        let csv = dir.path().join(format!("r{k}.csv"));
        let out = liekoop(&[
            "rescale",
            "--system",
            "torus-rescaled",
            "--seed",
            "7",
            "--out",
            json.to_str().unwrap(),
            "--csv",
            csv.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        outputs.push((report(&json), std::fs::read(&csv).unwrap()));
    }
    assert_eq!(outputs[0].0.to_string(), outputs[1].0.to_string());
    assert_eq!(outputs[0].1, outputs[1].1);
}

#[test]
fn suite_passes_on_the_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("suite.csv");
    let out = liekoop(&["suite", "--csv", csv.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 7 * 4);
}
