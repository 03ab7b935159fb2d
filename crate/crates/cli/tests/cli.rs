use std::path::Path;
use std::process::{Command, Output};

fn bourne(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bourne"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn missing_dataset_exits_with_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = bourne(&["train", "--data", &path(dir.path(), "nope"), "--out", &path(dir.path(), "m.ckpt")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn invalid_config_exits_with_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(bourne(&["synth", "--out", &path(d, "g"), "--nodes", "40", "--edge-prob", "0.1", "--dim", "4"]).status.success());
    std::fs::write(d.join("cfg.json"), r#"{"alpha": 0.0, "beta": 0.0}"#).unwrap();
    let out = bourne(&["--config", &path(d, "cfg.json"), "train", "--data", &path(d, "g"), "--out", &path(d, "m.ckpt")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn small_pipeline_reports_both_tasks() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("cfg.json"),
        r#"{"epochs": 2, "hidden_dim": 8, "predictor_hidden": 16, "eval_rounds": 2, "batch_size": 32}"#,
    )
    .unwrap();
    let cfg = path(d, "cfg.json");
    let steps: [&[&str]; 4] = [
        &["synth", "--out", &path(d, "g"), "--nodes", "80", "--edge-prob", "0.08", "--dim", "8"],
        &[
            "inject", "--data", &path(d, "g"), "--out", &path(d, "inj"), "--clique-size", "4", "--candidate-pool", "8",
        ],
        &["--config", &cfg, "train", "--data", &path(d, "inj"), "--out", &path(d, "m.ckpt"), "--log", &path(d, "log.jsonl")],
        &["score", "--ckpt", &path(d, "m.ckpt"), "--data", &path(d, "inj"), "--out", &path(d, "scores.json")],
    ];
    for args in steps {
        let out = bourne(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert!(d.join("inj/injection_report.json").exists());
    let log = std::fs::read_to_string(d.join("log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);

    let out = bourne(&[
        "eval",
        "--scores",
        &path(d, "scores.json"),
        "--data",
        &path(d, "inj"),
        "--out",
        &path(d, "report.json"),
        "--roc-dir",
        &path(d, "roc"),
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("task=node auc="));
    assert!(lines[1].starts_with("task=edge auc="));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.as_array().map(Vec::len), Some(2));
    let roc = std::fs::read_to_string(d.join("roc/roc_node.csv")).unwrap();
    assert!(roc.starts_with("fpr,tpr"));
}
