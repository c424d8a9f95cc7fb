//! End-to-end runs of the `mfi-pso` binary.

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfi-pso")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Synthesizes a small dataset and trains a model on it inside `dir`.
fn prepare(dir: &Path) {
    let data = dir.join("data");
    let o = run(&["synth", "--out", s(&data), "--per-class", "30", "--seed", "4", "--test-fraction", "0.25"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(data.join("train/images.idx").exists() && data.join("test/labels.idx").exists());
    let o = run(&["train", "--data", s(&data.join("train")), "--out", s(&dir.join("model.json")), "--epochs", "15"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.join("model.json.summary.json").exists());
}

#[test]
fn conflicting_pixel_flags_exit_with_a_usage_error() {
    let o = run(&["attack", "--m", "3", "--pixels", "1,2"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("--m") && err.contains("--pixels"), "{err}");

    let o = run(&["attack-set", "--mfi-img", "0.1", "--mfi-img-quantile", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(run(&["no-such-command"]).status.code() == Some(2));
}

#[test]
fn missing_input_files_exit_with_the_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["train", "--data", s(&dir.path().join("absent.json")), "--out", s(&dir.path().join("m.json"))]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn config_files_are_merged_under_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"per-class": 7, "classes": 2, "side": 4, "seed": 1}"#).unwrap();
    let out = dir.path().join("d");
    let o = run(&["synth", "--config", s(&cfg), "--out", s(&out), "--per-class", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let labels = std::fs::read(out.join("labels.idx")).unwrap();
    assert_eq!(labels.len() - 8, 10);

    std::fs::write(&cfg, r#"{"per_klass": 7}"#).unwrap();
    let o = run(&["synth", "--config", s(&cfg), "--out", s(&out)]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("per_klass"), "{}", stderr(&o));
}

#[test]
fn pipeline_runs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    let (model, test) = (d.join("model.json"), d.join("data/test"));

    let o = run(&["mfi-map", "--model", s(&model), "--data", s(&test), "--index", "0", "--out", s(&d.join("map"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.join("map/pixel_mfi.png").exists() && d.join("map/pixel_mfi.json").exists());
    let o = run(&["mfi-map", "--model", s(&model), "--data", s(&test), "--out", s(&d.join("map"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(d.join("map/image_mfi.csv")).unwrap();
    assert!(csv.starts_with("index,class,image_mfi"), "{csv}");

    let attack_set = |out: &str| {
        let o = run(&[
            "attack-set", "--model", s(&model), "--data", s(&test), "--mfi-img-quantile", "0.8",
            "--np", "30", "--iters", "80", "--seed", "2", "--out", s(&d.join(out)),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(d.join(out).join("results.json")).unwrap()
    };
    assert_eq!(attack_set("a1"), attack_set("a2"));
    for f in ["scores.json", "summary.json", "adversarial.json", "report.csv"] {
        assert!(d.join("a1").join(f).exists(), "{f}");
    }

    let o = run(&["report", "--input", &format!("test={}", s(&d.join("a1"))), "--out", s(&d.join("rep"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(d.join("rep/success_rates.csv")).unwrap();
    assert!(table.starts_with("split,mfi_img,n,successes,success_rate"), "{table}");
    assert_eq!(table.lines().count(), 4);

    let o = run(&[
        "finetune", "--model", s(&model), "--data", s(&d.join("data/train")), "--adv", s(&d.join("a1")),
        "--test", s(&test), "--out", s(&d.join("tuned.json")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.join("tuned.json.summary.json").exists());
}

#[test]
fn an_unsuccessful_attack_exits_with_the_infeasible_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    // One pixel, a tiny budget and a demanding target: no swarm can succeed.
    let o = run(&[
        "attack", "--model", s(&d.join("model.json")), "--data", s(&d.join("data/test")), "--index", "0",
        "--pixels", "0", "--eps", "0.01", "--perr", "0.99", "--np", "5", "--iters", "5", "--out", s(&d.join("att")),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(d.join("att/result.json").exists());
    assert!(stderr(&o).contains("loss:"));
}
