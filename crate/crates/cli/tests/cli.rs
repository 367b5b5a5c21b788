use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn wirefit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wirefit"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = wirefit(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn full_pipeline_recovers_gable() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(
        d,
        &[
            "gen",
            "--kind",
            "gable",
            "--out",
            "cloud.xyz",
            "--gt",
            "gt.obj",
            "--seed",
            "7",
        ],
    );
    let gt = fs::read_to_string(d.join("gt.obj")).unwrap();
    assert_eq!(gt.lines().filter(|l| l.starts_with("v ")).count(), 6);
    assert_eq!(gt.lines().filter(|l| l.starts_with("l ")).count(), 9);

    ok(
        d,
        &[
            "fit",
            "--cloud",
            "cloud.xyz",
            "--gt",
            "gt.obj",
            "--out",
            "pred_raw.json",
            "--trace",
            "trace.json",
            "--num-queries",
            "32",
            "--iterations",
            "2000",
            "--seed",
            "11",
        ],
    );
    let trace = json(&d.join("trace.json"));
    let trace = trace.as_array().unwrap();
    assert_eq!(trace.len(), 2001);
    assert!(trace.last().unwrap().as_f64().unwrap() < trace[0].as_f64().unwrap());
    assert_eq!(
        json(&d.join("pred_raw.json"))["edges"]
            .as_array()
            .unwrap()
            .len(),
        32
    );

    ok(
        d,
        &[
            "nms",
            "--in",
            "pred_raw.json",
            "--conf-threshold",
            "0.7",
            "--nms-threshold",
            "0.5",
            "--out",
            "pred.obj",
        ],
    );
    ok(
        d,
        &[
            "match",
            "--pred",
            "pred.obj",
            "--gt",
            "gt.obj",
            "--out",
            "match.json",
        ],
    );
    let m = json(&d.join("match.json"));
    assert_eq!(m["pairs"].as_array().unwrap().len(), 9);
    assert_eq!(m["similarity"].as_array().unwrap().len(), 9);

    let out = ok(
        d,
        &[
            "eval",
            "--pred",
            "pred.obj",
            "--gt",
            "gt.obj",
            "--corner-threshold",
            "0.1",
            "--out",
            "report.json",
        ],
    );
    assert!(out.stdout.is_empty());
    let report = json(&d.join("report.json"));
    assert_eq!(report["ef1"], 1.0);
    assert_eq!(report["cf1"], 1.0);
    let text = fs::read_to_string(d.join("report.json")).unwrap();
    let keys: Vec<&str> = text
        .lines()
        .filter_map(|l| l.trim().strip_prefix('"')?.split('"').next())
        .collect();
    assert_eq!(
        keys,
        [
            "aco",
            "cp",
            "cr",
            "cf1",
            "ep",
            "er",
            "ef1",
            "matched_corners",
            "matched_edges"
        ]
    );
}

#[test]
fn gen_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(
        d,
        &[
            "gen", "--kind", "hip", "--out", "a.xyz", "--gt", "a.obj", "--seed", "3",
        ],
    );
    ok(
        d,
        &[
            "gen", "--kind", "hip", "--out", "b.xyz", "--gt", "b.obj", "--seed", "3",
        ],
    );
    assert_eq!(
        fs::read(d.join("a.xyz")).unwrap(),
        fs::read(d.join("b.xyz")).unwrap()
    );
    assert_eq!(
        fs::read(d.join("a.obj")).unwrap(),
        fs::read(d.join("b.obj")).unwrap()
    );
    ok(
        d,
        &[
            "gen", "--kind", "hip", "--out", "c.xyz", "--gt", "c.obj", "--seed", "4",
        ],
    );
    assert_ne!(
        fs::read(d.join("a.xyz")).unwrap(),
        fs::read(d.join("c.xyz")).unwrap()
    );
}

#[test]
fn eval_writes_report_to_stdout_without_out() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::write(
        d.join("gt.obj"),
        "v 0 0 0\nv 1 0 0\nv 1 1 0\nl 1 2\nl 2 3\n",
    )
    .unwrap();
    fs::write(d.join("pred.obj"), "v 0 0 0\nv 1 0 0\nl 1 2\n").unwrap();
    let out = ok(d, &["eval", "--pred", "pred.obj", "--gt", "gt.obj"]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["er"], 0.5);
    assert_eq!(report["ep"], 1.0);
    assert!(!out.stderr.is_empty());
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::write(
        d.join("run.json"),
        r#"{"roof": {"kind": "flat", "width": 4.0, "depth": 3.0, "eave_height": 2.0, "ridge_height": 2.0,
            "point_count": 500, "noise_sigma": 0.0, "dropout_fraction": 0.0, "seed": 1},
            "paths": {"cloud": "cfg.xyz", "gt": "cfg.obj"}}"#,
    )
    .unwrap();
    ok(d, &["--config", "run.json", "gen"]);
    assert_eq!(
        fs::read_to_string(d.join("cfg.xyz"))
            .unwrap()
            .lines()
            .count(),
        500
    );
    ok(
        d,
        &[
            "--config",
            "run.json",
            "gen",
            "--point-count",
            "200",
            "--out",
            "flag.xyz",
        ],
    );
    assert_eq!(
        fs::read_to_string(d.join("flag.xyz"))
            .unwrap()
            .lines()
            .count(),
        200
    );
}

#[test]
fn errors_exit_nonzero_with_diagnostics_on_stderr() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::write(d.join("bad.obj"), "v 0 0 0\nv 1 0 0\nl 1 3\n").unwrap();
    fs::write(d.join("gt.obj"), "v 0 0 0\nv 1 0 0\nl 1 2\n").unwrap();

    let out = wirefit(d, &["eval", "--pred", "bad.obj", "--gt", "gt.obj"]);
    assert!(!out.status.success());
    assert!(out.stdout.is_empty());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");

    let out = wirefit(d, &["eval", "--pred", "missing.obj", "--gt", "gt.obj"]);
    assert!(!out.status.success());

    let out = wirefit(
        d,
        &["gen", "--kind", "dome", "--out", "x.xyz", "--gt", "x.obj"],
    );
    assert!(!out.status.success());

    let out = wirefit(
        d,
        &[
            "eval",
            "--pred",
            "gt.obj",
            "--gt",
            "gt.obj",
            "--corner-threshold",
            "-1",
        ],
    );
    assert!(!out.status.success());

    let out = wirefit(d, &["gen", "--kind", "gable"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--out"));
}

#[test]
fn nms_rejects_malformed_predictions() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::write(
        d.join("raw.json"),
        r#"{"edges": [], "quadrant_logits": [[0, 0, 0, 0]]}"#,
    )
    .unwrap();
    let out = wirefit(d, &["nms", "--in", "raw.json", "--out", "pred.obj"]);
    assert!(!out.status.success());
    assert!(!d.join("pred.obj").exists());

    fs::write(
        d.join("empty.json"),
        r#"{"edges": [], "quadrant_logits": []}"#,
    )
    .unwrap();
    ok(d, &["nms", "--in", "empty.json", "--out", "pred.obj"]);
    assert_eq!(fs::read_to_string(d.join("pred.obj")).unwrap(), "");
}
