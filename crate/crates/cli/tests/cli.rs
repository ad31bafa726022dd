use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn edgeslm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgeslm"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn edgeslm")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = edgeslm(dir, args);
    assert_eq!(code(&out), 0, "{args:?}: {}", stderr(&out));
    stdout(&out)
}

fn manifest(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(dir: &Path, seed: &str, name: &str) {
    ok(dir, &["synth", "--rows", "500", "--seed", seed, "--family-seed", "9", "--out", name]);
}

#[test]
fn estimate_all_matches_published_cells() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(dir.path(), &["estimate", "--model", "all", "--hardware", "all", "--out-dir", "o"]);
    // 5 models, header and rule; the 8 GB variant is not a column
    assert_eq!(text.lines().count(), 7);
    assert!(!text.contains("jetson-nano-8gb"));
    let gpt = text.lines().find(|l| l.starts_with("| distilGPT2 ")).unwrap();
    for cell in ["7.25", "327.65", "18.87", "205.85", "24.16s", "724.78ms", "144.96ms"] {
        assert!(gpt.contains(&format!(" {cell} ")), "{cell} missing from {gpt}");
    }
    let m = manifest(dir.path().join("o/estimate.manifest.json"));
    assert_eq!(m["command"], "estimate");
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn estimate_single_token_row() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(dir.path(), &["estimate", "--model", "tinyt5", "--seq-len", "1", "--format", "csv", "--out-dir", "o"]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("TinyT5,"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = edgeslm(dir.path(), &["estimate", "--model", "gpt-9"]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    for name in ["distilGPT2", "distilBERT", "TinyBERT", "Llama-3.2-1B", "TinyT5"] {
        assert!(err.contains(name), "{err}");
    }
    assert_eq!(code(&edgeslm(dir.path(), &["estimate", "--fpa", "3"])), 2);
    assert_eq!(code(&edgeslm(dir.path(), &["estimate", "-m", "x"])), 2);
    assert_eq!(code(&edgeslm(dir.path(), &["no-such-command"])), 2);
    assert_eq!(code(&edgeslm(dir.path(), &["prepare", "--dataset", "synthetic", "--input", "missing.csv", "--out", "x.prep"])), 2);
    assert_eq!(code(&edgeslm(dir.path(), &["prepare", "--dataset", "nope", "--input", "missing.csv", "--out", "x.prep"])), 2);
    assert_eq!(code(&edgeslm(dir.path(), &["simulate", "--model", "TinyT5", "--hardware", "raspberry-pi-3", "--unit", "gpu"])), 2);
    assert_eq!(code(&edgeslm(dir.path(), &["--help"])), 0);
}

#[test]
fn runtime_failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.pred"), "#edgeslm-pred v1\n1\t0\t1\t0.3\n1\t1\t1\t0.9\n").unwrap();
    let out = edgeslm(dir.path(), &["score-preds", "--predictions", "bad.pred"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));

    fs::write(dir.path().join("bad.ckpt"), b"not a checkpoint").unwrap();
    synth(dir.path(), "1", "a.prep");
    assert_eq!(code(&edgeslm(dir.path(), &["eval", "--checkpoint", "bad.ckpt", "--data", "a.prep"])), 1);
}

#[test]
fn prepare_is_deterministic_and_limit_caps() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--rows", "300", "--seed", "5", "--out", "s.prep", "--table", "s.csv"]);
    ok(d, &["prepare", "--dataset", "synthetic", "--input", "s.csv", "--out", "p1.prep"]);
    ok(d, &["prepare", "--dataset", "synthetic", "--input", "s.csv", "--out", "p2.prep"]);
    assert_eq!(fs::read(d.join("p1.prep")).unwrap(), fs::read(d.join("p2.prep")).unwrap());
    // the generator's records go through the same preparation
    assert_eq!(fs::read(d.join("p1.prep")).unwrap(), fs::read(d.join("s.prep")).unwrap());

    ok(d, &["prepare", "--dataset", "synthetic", "--input", "s.csv", "--out", "l1.prep", "--limit", "100", "--seed", "3"]);
    ok(d, &["prepare", "--dataset", "synthetic", "--input", "s.csv", "--out", "l2.prep", "--limit", "100", "--seed", "3"]);
    let limited = fs::read_to_string(d.join("l1.prep")).unwrap();
    assert_eq!(limited.lines().count(), 100);
    assert_eq!(limited, fs::read_to_string(d.join("l2.prep")).unwrap());

    let m = manifest(d.join("prepare.manifest.json"));
    let digest = m["inputs"][0]["sha256"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
    assert_eq!(m["seeds"]["limit"], 3);
}

#[test]
fn train_eval_and_score_agree() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "2", "a.prep");
    ok(d, &["train", "--data", "a.prep", "--learning-rate", "1e-2", "--out-dir", "t"]);
    let report: Value = serde_json::from_str(&fs::read_to_string(d.join("t/train.json")).unwrap()).unwrap();
    assert_eq!(report["n_train"], 300);
    assert_eq!(report["n_eval"], 200);

    ok(d, &["eval", "--checkpoint", "t/model.ckpt", "--data", "t/heldout.prep", "--out-dir", "e"]);
    let eval: Value = serde_json::from_str(&fs::read_to_string(d.join("e/eval.json")).unwrap()).unwrap();
    assert_eq!(eval["metrics"], report["test"]);
    assert_eq!(
        fs::read(d.join("e/eval.predictions")).unwrap(),
        fs::read(d.join("t/train.predictions")).unwrap()
    );
    ok(d, &["score-preds", "--predictions", "e/eval.predictions", "--out-dir", "s"]);
    let score: Value = serde_json::from_str(&fs::read_to_string(d.join("s/score-preds.json")).unwrap()).unwrap();
    assert_eq!(score["metrics"], report["test"]);
}

#[test]
fn zero_shot_predicts_benign() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "2", "a.prep");
    ok(d, &["train", "--data", "a.prep", "--mode", "zero-shot", "--out-dir", "z"]);
    let report: Value = serde_json::from_str(&fs::read_to_string(d.join("z/train.json")).unwrap()).unwrap();
    let held = fs::read_to_string(d.join("z/heldout.prep")).unwrap();
    let benign = held.lines().filter(|l| l.split('\t').nth(1) == Some("0")).count();
    let expected = benign as f64 / held.lines().count() as f64;
    assert_eq!(report["test"]["accuracy"].as_f64().unwrap(), expected);
    assert_eq!(report["train_seconds"], Value::Null);
}

#[test]
fn kfold_writes_one_row_per_fold() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "2", "a.prep");
    let text = ok(d, &["kfold", "--data", "a.prep", "--k", "5", "--epochs", "1", "--format", "csv", "--out-dir", "k"]);
    let rows: Vec<&str> = text.lines().filter(|l| l.starts_with("hashed-linear,")).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[0].contains("a fold 1"));
    assert_eq!(code(&edgeslm(d, &["kfold", "--data", "a.prep", "--k", "1"])), 2);
}

#[test]
fn cross_eval_rejects_the_diagonal() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "2", "a.prep");
    synth(d, "3", "b.prep");
    let out = edgeslm(d, &["cross-eval", "--train", "a.prep", "--eval", "a.prep"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("different datasets"));
    assert_eq!(code(&edgeslm(d, &["cross-eval", "--train", "a.prep", "--eval", "./a.prep"])), 2);
    assert_eq!(code(&edgeslm(d, &["cross-eval", "--data", "a.prep", "a.prep"])), 2);

    let text = ok(d, &["cross-eval", "--train", "a.prep", "--eval", "b.prep", "--epochs", "2", "--out-dir", "c"]);
    assert!(text.contains("| a -> b |"));
    let matrix = ok(d, &["cross-eval", "--data", "a.prep", "b.prep", "--epochs", "1", "--out-dir", "m"]);
    assert!(matrix.starts_with("| Train \\ Eval | a | b |"));
}

#[test]
fn simulate_llama_on_raspberry() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let text = ok(
        d,
        &["simulate", "--model", "llama-3.2-1b", "--hardware", "raspberry-pi-3", "--duration", "3600", "--out-dir", "s"],
    );
    assert!(text.contains("| Verdict | saturated |"));
    assert!(text.contains("| Final backlog | 3593 |"));
    let summary: Value = serde_json::from_str(&fs::read_to_string(d.join("s/simulate.json")).unwrap()).unwrap();
    assert_eq!(summary["report"]["completed"], 7);
    let trajectory = fs::read_to_string(d.join("s/simulate.trajectory.csv")).unwrap();
    assert!(trajectory.starts_with("time,backlog\n0,0\n"));
}

#[test]
fn analytical_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for out in ["r1", "r2"] {
        ok(d, &["simulate", "--model", "TinyT5", "--hardware", "jetson-nano", "--unit", "gpu", "--duration", "100", "--out-dir", out]);
        ok(d, &["estimate", "--out-dir", out, "--format", "csv"]);
    }
    for file in ["simulate.json", "simulate.trajectory.csv", "estimate.csv", "estimate.json"] {
        assert_eq!(fs::read(d.join("r1").join(file)).unwrap(), fs::read(d.join("r2").join(file)).unwrap(), "{file}");
    }
}

#[test]
fn select_features_recovers_informative_set() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--rows", "1500", "--seed", "21", "--out", "s.prep", "--table", "s.csv"]);
    let truth: Value = serde_json::from_str(&fs::read_to_string(d.join("synth.json")).unwrap()).unwrap();
    let names: Vec<String> = truth["informative_names"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    ok(d, &["select-features", "--input", "s.csv", "--dataset", "synthetic", "--method", "lasso", "--out-dir", "f"]);
    let results: Value = serde_json::from_str(&fs::read_to_string(d.join("f/select-features.json")).unwrap()).unwrap();
    let kept: Vec<String> = results[0]["kept"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| format!("f{}", i.as_u64().unwrap()))
        .collect();
    assert_eq!(kept, names);
    let csv = fs::read_to_string(d.join("f/select-features.lasso.csv")).unwrap();
    assert!(csv.starts_with("feature,method,score,kept\n"));
    assert_eq!(code(&edgeslm(d, &["select-features", "--input", "s.csv", "--dataset", "synthetic", "--method", "svm"])), 2);
}

#[test]
fn report_combines_json_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "2", "a.prep");
    ok(d, &["train", "--data", "a.prep", "--epochs", "1", "--out-dir", "t"]);
    ok(d, &["kfold", "--data", "a.prep", "--k", "3", "--epochs", "1", "--out-dir", "k"]);
    let text = ok(d, &["report", "--inputs", "t/train.json", "k/kfold.json", "--format", "csv", "--out-dir", "r"]);
    assert_eq!(text.lines().count(), 1 + 1 + 3);
    assert!(text.starts_with("Model,Dataset,Epochs,Train Time,"));
    fs::write(d.join("junk.json"), "{\"x\": 1}").unwrap();
    assert_eq!(code(&edgeslm(d, &["report", "--inputs", "junk.json"])), 1);
}
