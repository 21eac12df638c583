use std::path::PathBuf;
use std::process::Command;

use sos_scout::cli::{emit_report, render_json, render_text, run_scenario, ReportFormat, RunConfig};
use sos_scout::Error;

fn bundled(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.json"))
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sos-scout"))
}

#[test]
fn every_bundled_config_parses() {
    for name in ["t3_positive", "t3_negative", "solid_torus_meridian", "hopf_page", "birkhoff_annulus", "hyperbolic_obstruction"] {
        RunConfig::load(&bundled(name)).unwrap();
    }
}

#[test]
fn unknown_fields_and_versions_are_rejected() {
    let text = std::fs::read_to_string(bundled("t3_positive")).unwrap();
    let bad = text.replace("\"grid\"", "\"grid_size\"");
    match RunConfig::from_json(&bad) {
        Err(Error::Config { location, message }) => {
            assert!(location.starts_with("line 6"), "{location}");
            assert!(message.contains("grid_size"));
        }
        other => panic!("expected a config error, got {other:?}"),
    }
    let bad = text.replace("\"schema_version\": 1", "\"schema_version\": 7");
    assert!(matches!(RunConfig::from_json(&bad), Err(Error::Config { location, .. }) if location == "schema_version"));
    let bad = text.replace("\"seed\": 1", "\"seed\": 1, \"tol\": -1.0");
    assert!(matches!(RunConfig::from_json(&bad), Err(Error::Config { location, .. }) if location == "settings.tol"));
}

#[test]
fn json_report_has_the_stable_top_level_keys() {
    let r = run_scenario(&RunConfig::load(&bundled("t3_positive")).unwrap()).unwrap();
    let json = render_json(&r).unwrap();
    let top: Vec<&str> = json.lines().filter(|l| l.starts_with("  \"")).map(|l| l[3..].split('"').next().unwrap()).collect();
    assert_eq!(top, ["config", "orbits", "condition_iii", "certificate", "section", "timing"]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["config"]["seed"], 1);
    assert_eq!(v["config"]["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(v["condition_iii"]["margin_b"]["units"], "1/s");
    assert!((v["certificate"]["epsilon_star"].as_f64().unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn text_report_opens_with_the_verdict() {
    let r = run_scenario(&RunConfig::load(&bundled("t3_negative")).unwrap()).unwrap();
    let text = render_text(&r);
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("REFUTED μ·y=-1.0000"), "{first}");
    assert!(text.lines().all(|l| l.chars().count() <= 120));
}

#[test]
fn csv_bundle_files() {
    let r = run_scenario(&RunConfig::load(&bundled("solid_torus_meridian")).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = emit_report(&r, ReportFormat::CsvBundle, dir.path()).unwrap();
    let names: Vec<String> = written.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["b_grid.csv", "rotation_windows.csv", "return_times.csv", "leaf.obj"]);
    let returns = std::fs::read_to_string(dir.path().join("return_times.csv")).unwrap();
    let total: usize = returns.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 1000);
}

#[test]
fn exit_codes() {
    let out = binary().args(["run"]).arg(bundled("t3_positive")).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("CERTIFIED ε*=1.0000"));

    let dir = tempfile::tempdir().unwrap();
    let lp = dir.path().join("t3.lp");
    let out = binary()
        .args(["run", "--format", "json", "--seed", "9", "--lp-export"])
        .arg(&lp)
        .arg(bundled("t3_negative"))
        .env("SOS_SCOUT_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["config"]["seed"], 9);
    assert!(std::fs::read_to_string(lp).unwrap().starts_with("\\"));

    let missing = binary().args(["run", "/nonexistent/config.json"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn tiny_grid_is_inconclusive() {
    // one cell cannot carry a measure invariant under all 27 test functions, so the LP is infeasible
    let mut cfg = RunConfig::load(&bundled("solid_torus_meridian")).unwrap();
    cfg.scenario = serde_json::from_str(r#"{"kind": "solid_torus", "profile": [0.2, 0.0, 1.0]}"#).unwrap();
    cfg.settings.grid = 1;
    let r = run_scenario(&cfg).unwrap();
    assert_eq!(r.outcome().exit_code(), 3);
}
