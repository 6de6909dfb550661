use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use thermal_ranging::simulator::{Keyframe, SceneConfig, TargetConfig};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_thermal-ranging"));
    c.env_remove("THERMAL_RANGING_CONFIG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn scene(dir: &Path) -> PathBuf {
    let mut scene = SceneConfig::empty(3.0, 5);
    scene.noise_sigma_c = 0.3;
    for (id, r, az) in [(1, 2.0, -20.0), (2, 3.0, 20.0)] {
        scene.targets.push(TargetConfig {
            id,
            trajectory: vec![
                Keyframe::grounded(0.0, r, az, 1.7, 1.0),
                Keyframe::grounded(3.0, r + 0.3, az + 5.0, 1.7, 1.0),
            ],
            body_size_m: (0.45, 1.7),
            clothing_factor: 0.7,
            exposed_head: true,
        });
    }
    let p = dir.join("scene.json");
    std::fs::write(&p, serde_json::to_string_pretty(&scene).unwrap()).unwrap();
    p
}

fn error_kind(out: &Output) -> String {
    let text = String::from_utf8_lossy(&out.stderr);
    let v: serde_json::Value = serde_json::from_str(text.trim()).expect("stderr carries one JSON error");
    assert!(v["message"].is_string());
    v["error"].as_str().unwrap().to_string()
}

#[test]
fn simulate_train_run_eval_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let sim = d.join("sim");
    let out = run(&["simulate", "--scene", s(&scene(d)), "--out", s(&sim), "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(sim.join("frames.bin").is_file() && sim.join("labels.jsonl").is_file());

    let model = d.join("model.json");
    let out = run(&["train", "--frames", s(&sim), "--out", s(&model), "--seed", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let dets = d.join("dets.jsonl");
    let out = run(&["run", "--frames", s(&sim), "--model", s(&model), "--out", s(&dets)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let report = d.join("report.json");
    let csv = d.join("rows.csv");
    let labels = sim.join("labels.jsonl");
    let out = run(&["eval", "--detections", s(&dets), "--labels", s(&labels), "--report", s(&report), "--csv", s(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let f1 = r["f1"].as_f64().unwrap();
    assert!(f1 > 0.8, "f1 {f1}");
    assert!(r["mae_m"].as_f64().is_some());
    assert!(std::fs::read_to_string(&csv).unwrap().lines().count() > 1);

    let falls = d.join("falls.jsonl");
    assert!(run(&["fall", "--detections", s(&dets), "--out", s(&falls)]).status.success());
    assert!(falls.is_file());
    let heat = d.join("heat.csv");
    let pgm = d.join("heat.pgm");
    let counts = d.join("counts.jsonl");
    let out = run(&["occupancy", "--detections", s(&dets), "--out", s(&heat), "--pgm", s(&pgm), "--counts", s(&counts)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read(&pgm).unwrap().starts_with(b"P5\n"));
    assert_eq!(std::fs::read_to_string(&counts).unwrap().lines().count(), 48);

    // Same inputs, same bytes.
    let again = d.join("dets2.jsonl");
    assert!(run(&["run", "--frames", s(&sim), "--model", s(&model), "--out", s(&again)]).status.success());
    assert_eq!(std::fs::read(&dets).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn empty_detections_score_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let labels = d.join("labels.jsonl");
    std::fs::write(
        &labels,
        "{\"frame_index\":0,\"targets\":[{\"id\":1,\"bbox\":[100,100,160,300],\"range_m\":2.0,\"real_height_m\":1.7}]}\n",
    )
    .unwrap();
    let dets = d.join("dets.jsonl");
    std::fs::write(&dets, "").unwrap();
    let report = d.join("r.json");
    let out = run(&["eval", "--detections", s(&dets), "--labels", s(&labels), "--report", s(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["f1"].as_f64(), Some(0.0));
}

#[test]
fn failures_have_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();

    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "usage");

    let out = run(&["run", "--frames", s(&d.join("missing.bin")), "--out", s(&d.join("o.jsonl"))]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_kind(&out), "io");

    let garbage = d.join("garbage.bin");
    std::fs::write(&garbage, b"not a stream\n\x00\x01").unwrap();
    let out = run(&["run", "--frames", s(&garbage), "--out", s(&d.join("o.jsonl"))]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_kind(&out), "format");

    let empty = d.join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let future = d.join("future.jsonl");
    std::fs::write(&future, "{\"version\":9,\"frame_index\":0,\"targets\":[]}\n").unwrap();
    let out = run(&["eval", "--detections", s(&empty), "--labels", s(&future), "--report", s(&d.join("r.json"))]);
    assert_eq!(out.status.code(), Some(5));
    assert_eq!(error_kind(&out), "schema");

    let negative = d.join("neg.jsonl");
    std::fs::write(
        &negative,
        "{\"frame_index\":0,\"targets\":[{\"id\":1,\"bbox\":[0,0,5,5],\"range_m\":-1,\"real_height_m\":1.7}]}\n",
    )
    .unwrap();
    let out = run(&["eval", "--detections", s(&empty), "--labels", s(&negative), "--report", s(&d.join("r.json"))]);
    assert_eq!(out.status.code(), Some(6));
    assert_eq!(error_kind(&out), "validation");

    let cfg = d.join("config.json");
    std::fs::write(&cfg, "{\"heatmap\":{\"cell_size_m\":0.0}}").unwrap();
    let out = run(&["--config", s(&cfg), "occupancy", "--detections", s(&empty), "--out", s(&d.join("h.csv"))]);
    assert_eq!(out.status.code(), Some(7));
    assert_eq!(error_kind(&out), "infeasible");

    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
