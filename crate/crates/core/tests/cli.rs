mod common;

use std::path::Path;
use std::process::{Command, Output};

use omnisense::allocator::solve;
use omnisense::sim::{read_detections, read_results_csv, read_trace, OUTPUT_FILES};

fn omnisense(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_omnisense"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn plan_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let inst = common::random_instance(4, 4, 5);
    std::fs::write(
        dir.path().join("inst.json"),
        serde_json::to_string(&inst.to_file()).unwrap(),
    )
    .unwrap();
    let report = stdout_json(&omnisense(
        &["plan", "--instance", "inst.json", "--seed", "11"],
        dir.path(),
    ));
    let plan = solve(&inst, 11);
    assert_eq!(report["value"].as_f64().unwrap(), plan.value);
    assert_eq!(report["latency"].as_f64().unwrap(), plan.latency);
    let assignment: Vec<usize> = serde_json::from_value(report["assignment"].clone()).unwrap();
    assert_eq!(assignment, plan.assignment);
}

#[test]
fn simulate_then_eval_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(
        omnisense(&["trace-gen", "--seed", "5", "--out", "trace.jsonl"], d)
            .status
            .success()
    );
    std::fs::write(
        d.join("run.json"),
        r#"{"version": 1, "budget_s": 1.0, "trace": {"path": "trace.jsonl"}}"#,
    )
    .unwrap();
    let summary = stdout_json(&omnisense(
        &["simulate", "--config", "run.json", "--out", "out"],
        d,
    ));
    for name in OUTPUT_FILES {
        assert!(d.join("out").join(name).exists());
    }

    // results.csv and detections.jsonl parse back to what the summary reports
    let rows = read_results_csv(&d.join("out/results.csv")).unwrap();
    let trace = read_trace(std::io::BufReader::new(
        std::fs::File::open(d.join("trace.jsonl")).unwrap(),
    ))
    .unwrap();
    assert_eq!(rows.len(), trace.frames.len());
    let (dets, latencies) = read_detections(std::io::BufReader::new(
        std::fs::File::open(d.join("out/detections.jsonl")).unwrap(),
    ))
    .unwrap();
    assert_eq!(
        latencies,
        rows.iter().map(|r| r.latency_s).collect::<Vec<_>>()
    );
    assert_eq!(
        dets.iter().map(Vec::len).collect::<Vec<_>>(),
        rows.iter().map(|r| r.n_detections).collect::<Vec<_>>()
    );

    let report = stdout_json(&omnisense(
        &[
            "eval",
            "--dets",
            "out/detections.jsonl",
            "--truth",
            "trace.jsonl",
        ],
        d,
    ));
    assert_eq!(report["sph_map"], summary["sph_map"]);
    assert_eq!(report["mean_latency_s"], summary["mean_latency_s"]);
}

#[test]
fn eval_of_ground_truth_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(
        omnisense(&["trace-gen", "--seed", "1", "--out", "t.jsonl"], d)
            .status
            .success()
    );
    let report = stdout_json(&omnisense(
        &["eval", "--dets", "t.jsonl", "--truth", "t.jsonl", "--sweep"],
        d,
    ));
    assert_eq!(report["sph_map"].as_f64(), Some(1.0));
    assert_eq!(report["sph_map_sweep"].as_f64(), Some(1.0));
}

#[test]
fn exit_codes_and_field_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("bad.json"),
        r#"{"version": 1, "budget_s": -1, "trace": {"generate": {"seed": 1}}}"#,
    )
    .unwrap();
    let out = omnisense(&["simulate", "--config", "bad.json", "--out", "o"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget_s"));

    std::fs::write(
        d.join("typo.json"),
        r#"{"version": 1, "predictor": {"fov": 1.0, "gama": 1.1}}"#,
    )
    .unwrap();
    let out = omnisense(&["simulate", "--config", "typo.json", "--out", "o"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gama"));

    std::fs::write(d.join("inst.json"), r#"{"budget_s": 1, "models": ["a"], "srois": [{"alpha": 1, "dP": [0.1], "dI": ["x"], "A": [0.5]}]}"#).unwrap();
    let out = omnisense(&["plan", "--instance", "inst.json"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("srois[0].dI"),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = omnisense(
        &[
            "eval",
            "--dets",
            "missing.jsonl",
            "--truth",
            "missing.jsonl",
        ],
        d,
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn geometry_utilities() {
    let dir = tempfile::tempdir().unwrap();
    let iou = stdout_json(&omnisense(
        &["geom", "iou", "0,0,60,60", "30,0,60,60"],
        dir.path(),
    ));
    assert!((iou["sph_iou"].as_f64().unwrap() - 1.0 / 3.0).abs() < 0.01);
    let area = stdout_json(&omnisense(&["geom", "area", "-20,10,360,180"], dir.path()));
    assert_eq!(area["noa"].as_f64(), Some(1.0));
}
