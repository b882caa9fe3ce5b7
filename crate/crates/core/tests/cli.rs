mod common;

use std::path::Path;
use std::process::{Command, Output};

fn uset(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uset")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn train_predict_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.csv");
    common::blobs(60, 1.5, 4).save_csv(&data).unwrap();
    let model = dir.path().join("model.json");
    let out = dir.path().join("res");

    let text = ok(uset(&[
        "train", "--data", p(&data), "--loss", "tq", "--lambda", "1", "--gamma", "1", "--model", p(&model), "--out",
        p(&out),
    ]));
    assert!(text.starts_with("lambda 1 gamma"), "{text}");
    assert!(model.exists());
    for f in ["results.csv", "results.jsonl", "summary.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }

    let labels = ok(uset(&["predict", "--model", p(&model), "--data", p(&data), "--labeled"]));
    let labels: Vec<i32> = labels.lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(labels.len(), 60);
    assert!(labels.iter().all(|&l| l == 1 || l == -1));

    let err: f64 = ok(uset(&["eval", "--model", p(&model), "--data", p(&data)])).trim().parse().unwrap();
    let wrong = std::fs::read_to_string(&data)
        .unwrap()
        .lines()
        .skip(1)
        .zip(&labels)
        .filter(|(row, &l)| !row.ends_with(&format!(",{l}")))
        .count();
    assert!((err - wrong as f64 / 60.0).abs() < 1e-12);
    assert!(err < 0.2, "{err}");

    // unlabeled features with a header row
    let feats = dir.path().join("x.csv");
    std::fs::write(&feats, "a,b\n3,3\n-3,-3\n").unwrap();
    let two = ok(uset(&["predict", "--model", p(&model), "--data", p(&feats)]));
    assert_eq!(two.lines().collect::<Vec<_>>(), vec!["1", "-1"]);
}

#[test]
fn cv_table() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    common::blobs(40, 1.0, 9).save_csv(&data).unwrap();
    let text = ok(uset(&["cv", "--data", p(&data), "--lambda", "0.5,2", "--gamma", "0.5,2", "--folds", "3"]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "lambda,gamma,mean_error");
    assert_eq!(lines.len(), 5);
}

#[test]
fn oracle_and_psi() {
    let text = ok(uset(&["oracle", "conjugate", "--loss", "tq", "--alpha", "0.5,2"]));
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[3] < 1e-6));
    assert_eq!(rows[1][1], -1.0);

    let text = ok(uset(&["diagnose", "psi", "--loss", "exp", "--theta", "0.6", "--rho", "0"]));
    let last = text.lines().nth(1).unwrap();
    let v: f64 = last.rsplit(',').next().unwrap().parse().unwrap();
    assert!((v - 0.2).abs() < 1e-8);
}

#[test]
fn synth_writes_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let text = ok(uset(&[
        "synth", "--reps", "2", "--lambda", "1", "--gamma", "1", "--baseline", "--out", p(&out),
    ]));
    assert!(text.contains("esterr-h0"), "{text}");
    assert!(text.contains("ellipsoid-baseline"), "{text}");
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
}

#[test]
fn exit_codes() {
    let missing = uset(&["eval", "--model", "/nonexistent/m.json", "--data", "/nonexistent/d.csv"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent"));

    let bad_loss = uset(&["oracle", "conjugate", "--loss", "hinge:nu=7"]);
    assert_eq!(bad_loss.status.code(), Some(2));

    let hinge = uset(&["diagnose", "psi", "--loss", "hinge:nu=0.5"]);
    assert_eq!(hinge.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&hinge.stderr).contains("differentiable"));

    let no_data = uset(&["train", "--model", "/tmp/never.json"]);
    assert_eq!(no_data.status.code(), Some(2));

    let bad_split = uset(&["cv", "--data", "x.csv", "--split", "1.5"]);
    assert_eq!(bad_split.status.code(), Some(2));
}
