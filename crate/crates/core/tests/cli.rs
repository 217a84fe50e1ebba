use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pntkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pntkit")).args(args).output().expect("binary runs")
}

fn document(args: &[&str]) -> Value {
    let out = pntkit(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).expect("json document");
    let schema: Value = serde_json::from_str(include_str!("../../../schema/report-v1.json")).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(&doc).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{args:?} violates the report schema: {errors:?}");
    doc
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn rectangle(t1: f64, f0: f64, f1: f64) -> String {
    format!(
        "segments_per_leg = 200\nclose = true\nwaypoints = [\n  {{ theta = 0.0, phi = {f0} }},\n  {{ theta = {t1}, phi = {f0} }},\n  {{ theta = {t1}, phi = {f1} }},\n  {{ theta = 0.0, phi = {f1} }},\n]\n"
    )
}

#[test]
fn spectrum_lambda_two_photons_has_two_dark_states() {
    let d = document(&["spectrum", "--model", "lambda", "--N", "2"]);
    let blocks = d["result"]["blocks"].as_array().unwrap();
    let dark = blocks.iter().find(|b| b["eigenvalue"].as_f64().unwrap().abs() < 1e-9).unwrap();
    assert_eq!(dark["degeneracy"], 2);
}

#[test]
fn spectrum_fcg4_single_particle() {
    let d = document(&["spectrum", "--model", "fcg4", "--N", "1"]);
    let mut eigs: Vec<(i64, u64)> =
        d["result"]["blocks"].as_array().unwrap().iter().map(|b| (b["eigenvalue"].as_f64().unwrap().round() as i64, b["degeneracy"].as_u64().unwrap())).collect();
    eigs.sort();
    assert_eq!(eigs, vec![(-1, 1), (0, 1), (1, 2)]);
}

#[test]
fn malformed_model_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "bad.toml", "name = \"broken\"\nmodes = [\n");
    let out = pntkit(&["spectrum", "--model", &path, "--N", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line") && err.contains("column"), "{err}");
}

#[test]
fn unknown_model_exits_2() {
    assert_eq!(pntkit(&["validate", "--model", "no_such_model"]).status.code(), Some(2));
}

#[test]
fn validate_accepts_builtins() {
    for name in ["lambda", "tripod", "fcg4", "fcg3", "kerr2", "jaynes_cummings"] {
        let out = pntkit(&["validate", "--model", name]);
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn curvature_fcg4_two_particles_rank_5() {
    let d = document(&["curvature", "--model", "fcg4", "--N", "2", "--eigenvalue", "0", "--order", "1", "--points", "0"]);
    assert_eq!(d["result"]["span"]["rank"], 5);
    assert!(!d["result"]["span"]["singular_values"].as_array().unwrap().is_empty());
}

#[test]
fn curvature_kerr2_ground_rank_16() {
    let d = document(&["curvature", "--model", "kerr2", "--eigenvalue", "2", "--order", "2", "--points", "0"]);
    assert_eq!(d["result"]["span"]["rank"], 16);
}

#[test]
fn curvature_lambda_order_0_rank_1() {
    let d = document(&["curvature", "--model", "lambda", "--N", "1", "--eigenvalue", "0", "--order", "0"]);
    assert_eq!(d["result"]["span"]["rank"], 1);
}

#[test]
fn holonomy_lambda_rectangle_phase() {
    let dir = tempfile::tempdir().unwrap();
    let lp = write(dir.path(), "rect.toml", &rectangle(PI / 4.0, 0.0, PI / 2.0));
    let d = document(&["holonomy", "--model", "lambda", "--N", "1", "--eigenvalue", "0", "--loop", &lp, "--method", "both"]);
    let r = &d["result"];
    assert!((r["geometric_phase_area"].as_f64().unwrap() - PI / 4.0).abs() < 1e-9);
    for m in r["results"].as_array().unwrap() {
        assert!((m["eigenphases"][0].as_f64().unwrap() - PI / 4.0).abs() < 1e-6, "{m}");
    }
    assert!(r["cross_method_deviation"].as_f64().unwrap() < 1e-6);
}

#[test]
fn holonomy_two_loop_mode_reports_commutator() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.toml", &rectangle(0.6, 0.3, 1.1));
    let b = write(dir.path(), "b.toml", &rectangle(0.9, 0.3, -0.4));
    let d = document(&["holonomy", "--model", "lambda", "--N", "2", "--eigenvalue", "0", "--loop", &a, "--loop2", &b]);
    assert!(d["result"]["commutator_defect"].as_f64().unwrap() < 1e-5);
}

#[test]
fn pnt_lambda_and_jaynes_cummings() {
    assert_eq!(document(&["pnt", "--model", "lambda", "--N", "3"])["result"]["n_t"], 1);
    assert_eq!(document(&["pnt", "--model", "jaynes_cummings", "--N", "3"])["result"]["n_t"], 0);
}

#[test]
fn pnt_table_export_has_header() {
    let out = pntkit(&["pnt", "--model", "lambda", "--N", "2", "--format", "table"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("l,eps,d,particles_needed,dim_F,dim_hol,stagnation_order,flags\n"), "{text}");
    assert!(text.lines().count() > 1);
}

#[test]
fn identical_invocations_are_byte_identical() {
    let args = ["curvature", "--model", "tripod", "--N", "1", "--eigenvalue", "0", "--order", "1", "--seed", "17"];
    let a = pntkit(&args);
    let b = pntkit(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn seed_changes_sample_points() {
    let base = ["curvature", "--model", "tripod", "--N", "1", "--eigenvalue", "0", "--order", "0"];
    let a = document(&[&base[..], &["--seed", "1"]].concat());
    let b = document(&[&base[..], &["--seed", "2"]].concat());
    assert_ne!(a["result"]["span"]["sample_points"], b["result"]["span"]["sample_points"]);
    assert_eq!(a["manifest"]["config"]["seed"], 1);
}

#[test]
fn out_flag_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let out = pntkit(&["spectrum", "--model", "lambda", "--N", "1", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(doc["schema"], "pntkit.report/1");
}

#[test]
fn timestamp_only_when_requested() {
    let plain = document(&["spectrum", "--model", "lambda", "--N", "1"]);
    assert!(plain["manifest"]["timestamp"].is_null());
    let stamped = document(&["spectrum", "--model", "lambda", "--N", "1", "--timestamp"]);
    assert!(stamped["manifest"]["timestamp"].as_u64().unwrap() > 0);
}

#[test]
fn open_loop_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let lp = write(dir.path(), "open.toml", "waypoints = [ { theta = 0.1, phi = 0.0 }, { theta = 0.5, phi = 0.0 }, { theta = 0.5, phi = 1.0 } ]\n");
    let out = pntkit(&["holonomy", "--model", "lambda", "--N", "1", "--eigenvalue", "0", "--loop", &lp]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
