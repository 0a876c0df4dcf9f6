use std::f64::consts::{E, FRAC_PI_2};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use deformlab_core::geodesic::{connect, shoot, ConnectOptions};
use deformlab_core::{load_manifold, ManifoldSpec};
use serde_json::Value;

fn deformlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deformlab"))
        .args(args)
        .env("RUST_BACKTRACE", "0")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(out));
    serde_json::from_str(&stdout(out)).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|c| c.as_f64().unwrap()).collect()
}

fn last_row(csv: &str) -> Vec<f64> {
    csv.lines()
        .last()
        .unwrap()
        .split(',')
        .map(|c| c.parse().unwrap())
        .collect()
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compares against a checked-in file; `UPDATE_GOLDEN=1` rewrites it.
fn check_golden(name: &str, actual: &str) -> String {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, actual).unwrap();
    }
    fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn flat_geodesic_endpoint() {
    let out = deformlab(&[
        "geodesic",
        "--manifold",
        "flat2",
        "--x",
        "0,0",
        "--tau",
        "1,2",
        "--T",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let row = last_row(&stdout(&out));
    assert_eq!(row[0], 1.0);
    assert!((row[1] - 1.0).abs() < 1e-14 && (row[2] - 2.0).abs() < 1e-14, "{row:?}");
}

#[test]
fn halfplane_geodesic_endpoint() {
    let out = deformlab(&[
        "geodesic",
        "--manifold",
        "halfplane",
        "--x",
        "0,1",
        "--tau",
        "0,1",
        "--T",
        "1",
    ]);
    let row = last_row(&stdout(&out));
    assert!(row[1].abs() < 1e-14);
    assert!((row[2] - E).abs() < 1e-10, "{}", row[2]);
}

#[test]
fn equator_geodesic_endpoint() {
    let out = deformlab(&[
        "geodesic",
        "--manifold",
        "sphere2",
        "--x",
        "1.5707963,0",
        "--tau",
        "0,1",
        "--T",
        "1",
    ]);
    let row = last_row(&stdout(&out));
    assert!((row[1] - FRAC_PI_2).abs() < 1e-6, "{}", row[1]);
    assert!((row[2] - 1.0).abs() < 1e-6, "{}", row[2]);
}

#[test]
fn csv_header_and_negative_components() {
    let out = deformlab(&[
        "geodesic",
        "--manifold",
        "flat2",
        "--x",
        "-1,-2",
        "--tau",
        "-0.5,3",
        "--steps",
        "10",
    ]);
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 12);
    assert!(text.lines().next().unwrap().starts_with("s,"));
    let row = last_row(&text);
    assert!((row[1] + 1.5).abs() < 1e-14 && (row[2] - 1.0).abs() < 1e-14);
}

#[test]
fn domain_exit_is_code_2() {
    let pole = deformlab(&[
        "geodesic",
        "--manifold",
        "sphere2",
        "--x",
        "0.2,0",
        "--tau",
        "-1,0",
        "--T",
        "1",
    ]);
    assert_eq!(pole.status.code(), Some(2), "{}", stderr(&pole));
    assert_eq!(stderr(&pole).lines().count(), 1);
}

#[test]
fn bad_input_is_code_1() {
    for args in [
        vec!["geodesic", "--manifold", "nowhere", "--x", "0,0", "--tau", "1,0"],
        vec!["geodesic", "--manifold", "flat2", "--x", "0,0,0", "--tau", "1,0"],
        vec!["geodesic", "--manifold", "flat2", "--x", "0,a", "--tau", "1,0"],
        vec!["geodesic", "--x", "0,0", "--tau", "1,0"],
        vec!["jet", "--manifold", "halfplane", "--x", "0,-1"],
    ] {
        let out = deformlab(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn connect_round_trip() {
    let v = json(&deformlab(&[
        "connect",
        "--manifold",
        "sphere2",
        "--x",
        "1.2,0.1",
        "--xp",
        "1.3,0.25",
    ]));
    let tau = floats(&v["tau"]);
    let m = load_manifold(&ManifoldSpec::from_short_name("sphere2").unwrap()).unwrap();
    let end = shoot(&m, &m.point(vec![1.2, 0.1]).unwrap(), &tau, 1.0, 1000).unwrap();
    let x = &end.end().x;
    assert!((x[0] - 1.3).abs() < 1e-12 && (x[1] - 0.25).abs() < 1e-12, "{x:?}");
}

#[test]
fn connect_beyond_locality_is_code_3() {
    let out = deformlab(&["connect", "--manifold", "sphere2", "--x", "0.5,0", "--xp", "2.5,0"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("locality"));
}

#[test]
fn flat_transport_methods_agree() {
    let v = json(&deformlab(&[
        "transport",
        "--manifold",
        "flat2",
        "--x",
        "0.5,-1",
        "--xp",
        "3,2",
        "--theta",
        "1,-2",
        "--method",
        "both",
    ]));
    assert_eq!(v["discrepancy"].as_f64().unwrap(), 0.0);
    assert_eq!(floats(&v["jet"]), vec![1.0, -2.0]);
}

#[test]
fn sphere_radial_transport() {
    let m = load_manifold(&ManifoldSpec::from_short_name("sphere2").unwrap()).unwrap();
    let (x, xp) = (vec![1.4, 0.2], vec![1.5, 0.25]);
    let px = m.point(x.clone()).unwrap();
    let tau = connect(&m, &px, &m.point(xp.clone()).unwrap(), &ConnectOptions::default()).unwrap();
    let theta = shoot(&m, &px, &tau.components, 1.0, 1000).unwrap().end().tau.clone();
    let arg = |v: &[f64]| format!("{},{}", v[0], v[1]);
    let v = json(&deformlab(&[
        "transport",
        "--manifold",
        "sphere2",
        "--x",
        &arg(&x),
        "--xp",
        &arg(&xp),
        "--theta",
        &arg(&theta),
    ]));
    assert_eq!(v["status"], "radial");
    assert!(v["discrepancy"].as_f64().unwrap() < 1e-6, "{v}");
}

#[test]
fn sphere_nonradial_transport_is_measured() {
    let v = json(&deformlab(&[
        "transport",
        "--manifold",
        "sphere2",
        "--x",
        "1.4,0.2",
        "--xp",
        "1.5,0.25",
        "--theta",
        "1,-1",
    ]));
    assert_eq!(v["status"], "measured");
    let d = v["discrepancy"].as_f64().unwrap();
    assert!(d > 0.0 && d.is_finite());
}

#[test]
fn single_method_transport() {
    for method in ["jet", "ode"] {
        let v = json(&deformlab(&[
            "transport",
            "--manifold",
            "halfplane",
            "--x",
            "0,1",
            "--xp",
            "0.1,1.1",
            "--theta",
            "0,1",
            "--method",
            method,
        ]));
        assert!(v.get(method).is_some());
        assert!(v.get("discrepancy").is_none());
    }
}

#[test]
fn flat_jet_golden() {
    let out = deformlab(&["jet", "--manifold", "flat2", "--x", "0.5,-1", "--order", "3"]);
    let text = stdout(&out);
    assert_eq!(text, check_golden("jet_flat2.json", &text));
}

#[test]
fn halfplane_jet_golden() {
    let out = deformlab(&["jet", "--manifold", "halfplane", "--x", "0.3,1.5", "--order", "6"]);
    let v = json(&out);
    let expected: Value = serde_json::from_str(&check_golden("jet_halfplane.json", &stdout(&out))).unwrap();
    let (a, b) = (
        v["coefficients"].as_object().unwrap(),
        expected["coefficients"].as_object().unwrap(),
    );
    assert_eq!(a.len(), b.len());
    for (key, value) in a {
        let (p, q) = (value.as_f64().unwrap(), b[key].as_f64().unwrap());
        assert!((p - q).abs() <= 1e-12 * (1.0 + q.abs()), "{key}: {p} vs {q}");
    }
}

#[test]
fn halfplane_action() {
    let v = json(&deformlab(&[
        "action",
        "--manifold",
        "halfplane",
        "--x",
        "0,1",
        "--xp",
        "0,1.2",
        "--hj",
    ]));
    let exact = 0.5 * 1.2f64.ln().powi(2);
    assert!((v["action"].as_f64().unwrap() - exact).abs() < 1e-10);
    assert!(v["hj_residual"].as_f64().unwrap() < 1e-5);
}

#[test]
fn flat_verify_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = deformlab(&["verify", "--manifold", "flat2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    let report = fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert_eq!(report, check_golden("verify_flat2.json", &report));
    let v: Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["summary"]["assert_fail"], 0);
    assert_eq!(v["summary"]["measured"], 0);
    let csv = fs::read_to_string(dir.path().join("ladders.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("s,residual,kind"));
}

#[test]
fn verify_is_deterministic_across_worker_counts() {
    let one = deformlab(&["verify", "--manifold", "flat3", "--workers", "1"]);
    let four = deformlab(&["verify", "--manifold", "flat3", "--workers", "4"]);
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn coarse_verify_fails_speed_conservation() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("coarse.json");
    fs::write(&config, r#"{ "steps": 10 }"#).unwrap();
    let out = deformlab(&[
        "verify",
        "--manifold",
        "halfplane",
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("geodesic.speed_conservation"));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let failed: Vec<&Value> = v["records"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["check"] == "geodesic.speed_conservation")
        .collect();
    assert!(!failed.is_empty());
    for r in failed {
        assert_eq!(r["status"], "assert-fail");
        assert!(r["message"].as_str().unwrap().contains("exceeds tolerance"));
    }
}

#[test]
fn tol_scale_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("loose.json");
    fs::write(&config, r#"{ "steps": 10, "tol_scale": 1.0 }"#).unwrap();
    let out = deformlab(&[
        "verify",
        "--manifold",
        "flat2",
        "--config",
        config.to_str().unwrap(),
        "--tol-scale",
        "2",
    ]);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["config"]["tol_scale"], 2.0);
    assert_eq!(v["config"]["steps"], 10);
}

#[test]
fn malformed_config_is_code_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    fs::write(&config, r#"{ "stepz": 10 }"#).unwrap();
    let out = deformlab(&["verify", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("stepz"));
}
