use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn ec3(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ec3")).args(args).output().unwrap()
}

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name).display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn fused_rows(dir: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(dir.join("distributions.csv")).unwrap();
    text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn fuse_writes_a_stochastic_row_per_object() {
    let out = TempDir::new().unwrap();
    let o = ec3(&["fuse", &data("toy8.csv"), "--out", &p(out.path(), "")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = fused_rows(out.path());
    assert_eq!(rows.len(), 8);
    for row in &rows {
        let s: f64 = row[1..4].iter().map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((s - 1.0).abs() <= 1e-9, "{row:?}");
    }
    let summary = json(&out.path().join("summary.json"));
    assert_eq!(summary["schema"], "ec3.fuse/1");
    assert_eq!(summary["num_objects"], 8);
    assert!(summary["metrics"]["auc"].as_f64().unwrap() > 0.5);
    assert!(out.path().join("trace.csv").exists());
}

#[test]
fn missing_input_exits_with_io_code_and_names_the_file() {
    let out = TempDir::new().unwrap();
    let missing = p(out.path(), "nowhere.csv");
    let o = ec3(&["fuse", &missing, "--out", &p(out.path(), "")]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains(&missing), "{}", stderr(&o));
}

#[test]
fn invalid_weights_exit_2_and_write_nothing() {
    let out = TempDir::new().unwrap();
    let dir = out.path().join("o");
    let o = ec3(&[
        "fuse", &data("toy8.csv"), "--out", &dir.display().to_string(),
        "--alpha", "0.5", "--beta", "0.5", "--gamma", "0.5", "--delta", "0.5",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("config stage failed"), "{}", stderr(&o));
    assert!(!dir.exists() || fs::read_dir(&dir).unwrap().next().is_none());

    let o = ec3(&["fuse", &data("toy8.csv"), "--alpha", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
}

fn write_imbalanced_toy(dir: &Path) -> PathBuf {
    // One large and two small predicted classes; the clusterer disagrees.
    let clf = [1, 1, 1, 1, 1, 1, 1, 1, 2, 3];
    let clu = [0, 0, 0, 1, 1, 1, 2, 2, 2, 2];
    let mut csv = String::from("id,c,k\n");
    for i in 0..10 {
        csv.push_str(&format!("x{i},{},{}\n", clf[i], clu[i]));
    }
    let path = dir.join("imb.csv");
    fs::write(&path, csv).unwrap();
    let manifest = serde_json::json!({
        "schema": "ec3/1",
        "num_objects": 10,
        "num_classes": 3,
        "num_classifiers": 1,
        "num_clusterers": 1,
        "has_truth": false,
        "header": true
    });
    fs::write(dir.join("imb.json"), manifest.to_string()).unwrap();
    path
}

#[test]
fn ec3_and_iec3_disagree_on_imbalanced_groups() {
    let dir = TempDir::new().unwrap();
    let input = write_imbalanced_toy(dir.path());
    let input = input.display().to_string();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (mode, out) in [("ec3", &a), ("iec3", &b)] {
        let o = ec3(&["fuse", &input, "--mode", mode, "--out", &out.display().to_string()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_ne!(fused_rows(&a), fused_rows(&b));
}

fn write_eval_files(dir: &Path, shuffled: bool) -> (String, String) {
    let mut pred = String::from("object_id,p1,p2,p3,label\n");
    let labels = [1, 2, 3, 1, 2, 3];
    for (i, &c) in labels.iter().enumerate() {
        let mut s = [0.1, 0.1, 0.1];
        s[c - 1] = 0.8;
        pred.push_str(&format!("o{i},{},{},{},{c}\n", s[0], s[1], s[2]));
    }
    let mut truth: Vec<String> = labels.iter().enumerate().map(|(i, c)| format!("o{i},{c}")).collect();
    if shuffled {
        truth.reverse();
    }
    let (pp, tp) = (dir.join("pred.csv"), dir.join(if shuffled { "t2.csv" } else { "t1.csv" }));
    fs::write(&pp, pred).unwrap();
    fs::write(&tp, format!("object_id,label\n{}\n", truth.join("\n"))).unwrap();
    (pp.display().to_string(), tp.display().to_string())
}

#[test]
fn eval_scores_perfect_predictions_regardless_of_row_order() {
    let dir = TempDir::new().unwrap();
    let (pred, truth) = write_eval_files(dir.path(), false);
    let (_, shuffled) = write_eval_files(dir.path(), true);
    let a = ec3(&["eval", &pred, &truth]);
    let b = ec3(&["eval", &pred, &shuffled]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["schema"], "ec3.metrics/1");
    assert_eq!(v["f_score"], 1.0);
    assert_eq!(v["auc"], 1.0);
}

#[test]
fn eval_rejects_single_class_truth_and_unknown_ids() {
    let dir = TempDir::new().unwrap();
    let (pred, _) = write_eval_files(dir.path(), false);
    let one = dir.path().join("one.csv");
    fs::write(&one, (0..6).map(|i| format!("o{i},2\n")).collect::<String>()).unwrap();
    let o = ec3(&["eval", &pred, &one.display().to_string()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("undefined"), "{}", stderr(&o));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, (0..6).map(|i| format!("z{i},{}\n", i % 3 + 1)).collect::<String>()).unwrap();
    let o = ec3(&["eval", &pred, &bad.display().to_string()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("z0") || stderr(&o).contains("o0"), "{}", stderr(&o));
}

#[test]
fn unknown_experiment_lists_the_valid_kinds() {
    let o = ec3(&["experiment", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    for k in ["compare", "sweep", "epsilon", "ablation", "robustness", "imbalance", "scaling"] {
        assert!(e.contains(k), "{e}");
    }
}

fn small_config(dir: &Path, extra: Value) -> String {
    let mut cfg = serde_json::json!({
        "common": {"repeats": 10, "data": {"kind": "synthetic", "num_objects": 150}}
    });
    if let (Some(c), Some(e)) = (cfg.as_object_mut(), extra.as_object()) {
        for (k, v) in e {
            c.insert(k.clone(), v.clone());
        }
    }
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path.display().to_string()
}

fn run_experiment(kind: &str, config: &str, out: &Path) -> Output {
    let o = ec3(&["experiment", kind, "--config", config, "--out", &out.display().to_string()]);
    assert!(o.status.success(), "{}", stderr(&o));
    o
}

#[test]
fn imbalance_reports_every_cell_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), Value::Null);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_experiment("imbalance", &cfg, &a);
    run_experiment("imbalance", &cfg, &b);
    assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(b.join("report.json")).unwrap());

    let report = json(&a.join("report.json"));
    let runs = report["runs"].as_array().unwrap();
    for mode in ["ec3", "iec3"] {
        let n = runs.iter().filter(|r| r["method"] == mode).count();
        assert_eq!(n, 7 * 10, "{mode}");
    }
    for name in ["report.json", "timings.json"] {
        assert!(json(&a.join(name))["schema"].is_string(), "{name}");
    }
    let csv = fs::read_to_string(a.join("runs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 70);
}

#[test]
fn epsilon_experiment_has_one_row_per_threshold() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), serde_json::json!({"common": {"repeats": 1, "data": {"kind": "synthetic", "num_objects": 150}}}));
    let out = dir.path().join("o");
    run_experiment("epsilon", &cfg, &out);
    let report = json(&out.join("report.json"));
    assert_eq!(report["runs"].as_array().unwrap().len(), 6);
    let timings = json(&out.join("timings.json"));
    assert_eq!(timings["rows"].as_array().unwrap().len(), 6);
}

#[test]
fn config_echo_reproduces_the_report() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), serde_json::json!({"common": {"repeats": 2, "data": {"kind": "iris_like", "seed": 3}}}));
    let first = dir.path().join("first");
    run_experiment("ablation", &cfg, &first);
    let report = json(&first.join("report.json"));
    let echo = dir.path().join("echo.json");
    fs::write(&echo, report["config"].to_string()).unwrap();
    let second = dir.path().join("second");
    run_experiment("ablation", &echo.display().to_string(), &second);
    assert_eq!(fs::read(first.join("report.json")).unwrap(), fs::read(second.join("report.json")).unwrap());
}
