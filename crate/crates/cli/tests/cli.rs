use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lastlayer::net::{NetworkParams, Snapshot, SnapshotSchedule, TrainConfig, TrainingTrace, LossKind, Architecture};
use ndarray::array;

fn lastlayer(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lastlayer"))
        .args(args)
        .current_dir(cwd)
        .env_remove(lastlayer_cli::OUT_DIR_ENV)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn gen_data_writes_requested_rows_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["gen-data", "--family", "moon", "--n", "4", "--seed", "3", "--out"];
    let a = lastlayer(&[&args[..], &["a.csv"]].concat(), dir.path());
    let b = lastlayer(&[&args[..], &["b.csv"]].concat(), dir.path());
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(code(&b), 0);
    assert!(stdout(&a).contains("N=4 K=2"));
    let ta = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(ta, fs::read(dir.path().join("b.csv")).unwrap());
    let text = String::from_utf8(ta).unwrap();
    assert_eq!(text.lines().next(), Some("x0,x1,label"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn gen_data_blob_reports_separable() {
    let dir = tempfile::tempdir().unwrap();
    let o = lastlayer(
        &["gen-data", "--family", "blob", "--n", "5000", "--scale", "100", "--seed", "7", "--out", "blob.csv"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("N=5000 K=2 separable=true"));
    let text = fs::read_to_string(dir.path().join("blob.csv")).unwrap();
    assert_eq!(text.lines().count(), 5001);
}

#[test]
fn gen_data_rejects_bad_spec() {
    let dir = tempfile::tempdir().unwrap();
    let o = lastlayer(&["gen-data", "--family", "blob", "--n", "0", "--out", "x.csv"], dir.path());
    assert_eq!(code(&o), 1);
}

const BLOB_TRAIN: &str = r#"
[dataset]
family = "blob"
sample_count = 40
scale = 1.0
seed = 1

[architecture]
hidden = []
feature_dim = 0
last_bias = false

[train]
loss = "logistic"
learning_rate = LR
max_iterations = 200
loss_stop_threshold = STOP
snapshots = { kind = "every", interval = 20 }
"#;

fn train_config(lr: &str, stop: &str) -> String {
    BLOB_TRAIN.replace("LR", lr).replace("STOP", stop)
}

#[test]
fn zero_learning_rate_gives_constant_trace_and_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), train_config("0.0", "0.01")).unwrap();
    let o = lastlayer(&["train", "--config", "c.toml", "--out-dir", "out"], dir.path());
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("converged=false"));
    let trace: TrainingTrace =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/trace.json")).unwrap()).unwrap();
    assert!(!trace.converged);
    let first = &trace.snapshots[0];
    assert!(trace.snapshots.iter().all(|s| s.last_weight == first.last_weight && s.loss == first.loss));
    assert!(dir.path().join("out/checkpoint.bin").exists());
}

#[test]
fn logistic_regression_on_blob_converges() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = train_config("0.5", "0.1").replace("max_iterations = 200", "max_iterations = 100000");
    fs::write(dir.path().join("c.toml"), cfg).unwrap();
    let o = lastlayer(&["train", "--config", "c.toml", "--out-dir", "out"], dir.path());
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("converged=true"));
}

#[test]
fn invalid_loss_class_combination_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = train_config("0.1", "0.0")
        .replace("family = \"blob\"", "family = \"multiclass-blob\"\nclass_count = 3");
    fs::write(dir.path().join("c.toml"), cfg).unwrap();
    let o = lastlayer(&["train", "--config", "c.toml"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));

    fs::write(dir.path().join("bad.toml"), train_config("0.1", "0.0").replace("logistic", "hinge")).unwrap();
    assert_eq!(code(&lastlayer(&["train", "--config", "bad.toml"], dir.path())), 1);
}

#[test]
fn solve_svm_on_two_points() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("two.csv"), "x0,x1,label\n1,0,1\n-1,0,2\n").unwrap();
    let o = lastlayer(&["solve-svm", "--input", "two.csv", "--out", "svm.json"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("svm.json")).unwrap()).unwrap();
    let w = &v["weights"][0];
    assert!((w[0].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!(w[1].as_f64().unwrap().abs() < 1e-9);
    assert_eq!(v["kkt_report"]["passed"], true);
}

#[test]
fn solve_svm_on_raw_moon_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let g = lastlayer(&["gen-data", "--family", "moon", "--n", "200", "--scale", "1", "--out", "moon.csv"], dir.path());
    assert_eq!(code(&g), 0);
    let o = lastlayer(&["solve-svm", "--input", "moon.csv", "--out", "svm.json"], dir.path());
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("certificate"), "{err}");
    assert!(!dir.path().join("svm.json").exists());
}

#[test]
fn solve_svm_needs_multiclass_flag_for_three_classes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("three.csv"), "x0,x1,label\n1,0,1\n-1,1,2\n-1,-1,3\n").unwrap();
    assert_eq!(code(&lastlayer(&["solve-svm", "--input", "three.csv", "--out", "s.json"], dir.path())), 1);
    let o = lastlayer(&["solve-svm", "--input", "three.csv", "--multiclass", "--out", "s.json"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

fn synthetic_trace(weight_at: impl Fn(f64) -> [f64; 2]) -> TrainingTrace {
    let iterations: Vec<u64> = (0..40).map(|i| (2.0 * 50f64.powf(i as f64 / 39.0)).round() as u64).collect();
    let mut its = iterations.clone();
    its.dedup();
    let snapshots = its
        .iter()
        .map(|&t| {
            let w = weight_at(t as f64);
            Snapshot::new(t, array![[w[0], w[1]]], None, 1.0 / t as f64)
        })
        .collect();
    let mut config = TrainConfig::gd(LossKind::Logistic, 0.1, 100);
    config.snapshots = SnapshotSchedule::Explicit { iterations: its };
    TrainingTrace {
        config,
        snapshots,
        converged: true,
        converged_at: Some(10),
        iterations: 100,
        overflow_at: None,
        final_params: Some(NetworkParams::init(&Architecture::linear(2, 1, false), 0)),
        snapshot_params: Vec::new(),
    }
}

const ANALYZE_CONFIG: &str = r#"
[dataset]
family = "blob"
sample_count = 10

[train]
loss = "logistic"
learning_rate = 0.1
max_iterations = 100

[analysis]
alignment_threshold = 0.99
require_divergence = true
r_squared_threshold = 0.99
"#;

fn run_analyze(trace: &TrainingTrace) -> (Output, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("two.csv"), "x0,x1,label\n1,0,1\n-1,0,2\n").unwrap();
    assert_eq!(code(&lastlayer(&["solve-svm", "--input", "two.csv", "--out", "svm.json"], dir.path())), 0);
    fs::write(dir.path().join("trace.json"), serde_json::to_string(trace).unwrap()).unwrap();
    fs::write(dir.path().join("c.toml"), ANALYZE_CONFIG).unwrap();
    let o = lastlayer(
        &["analyze", "--trace", "trace.json", "--svm", "svm.json", "--config", "c.toml", "--out-dir", "rep"],
        dir.path(),
    );
    (o, dir)
}

#[test]
fn analyze_passes_on_exact_log_trace() {
    let trace = synthetic_trace(|t| [3.0 * t.ln() + 0.2, 0.01 * t.ln() - 0.1]);
    let (o, dir) = run_analyze(&trace);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS")));
    for f in ["alignment.json", "divergence.json", "logfit.json", "analysis.json"] {
        assert!(dir.path().join("rep").join(f).exists(), "{f}");
    }
}

#[test]
fn analyze_fails_on_constant_trace() {
    let trace = synthetic_trace(|_| [2.0, 0.0]);
    let (o, _dir) = run_analyze(&trace);
    assert_eq!(code(&o), 3);
    assert!(stdout(&o).contains("FAIL norm_divergence_ratio"));
}

#[test]
fn analyze_rejects_shape_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("three.csv"), "x0,x1,label\n1,0,1\n-1,1,2\n-1,-1,3\n").unwrap();
    lastlayer(&["solve-svm", "--input", "three.csv", "--multiclass", "--out", "svm.json"], dir.path());
    let trace = synthetic_trace(|t| [t.ln(), 0.0]);
    fs::write(dir.path().join("trace.json"), serde_json::to_string(&trace).unwrap()).unwrap();
    let o = lastlayer(&["analyze", "--trace", "trace.json", "--svm", "svm.json", "--out-dir", "rep"], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn out_dir_comes_from_environment_when_unset_elsewhere() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), train_config("0.1", "0.0")).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lastlayer"))
        .args(["train", "--config", "c.toml"])
        .current_dir(dir.path())
        .env(lastlayer_cli::OUT_DIR_ENV, "from-env")
        .output()
        .unwrap();
    assert_eq!(code(&o), 3);
    assert!(dir.path().join("from-env/trace.json").exists());
}

const SECTOR_OVERLAP: &str = r#"
[dataset]
family = "sector-overlap"
sample_count = 40
scale = 1.0
seed = 0

[architecture]
hidden = [64]

[train]
loss = "logistic"
learning_rate = 0.01
max_iterations = 20000
loss_stop_threshold = 0.2
"#;

#[test]
fn pipeline_on_sector_overlap_separates_features_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), SECTOR_OVERLAP).unwrap();
    let a = lastlayer(&["pipeline", "--config", "c.toml", "--out-dir", "a"], dir.path());
    assert_eq!(code(&a), 0, "{}{}", stdout(&a), String::from_utf8_lossy(&a.stderr));
    let b = lastlayer(&["pipeline", "--config", "c.toml", "--out-dir", "b"], dir.path());
    assert_eq!(code(&b), 0);

    let text = fs::read_to_string(dir.path().join("a/summary.json")).unwrap();
    assert_eq!(text, fs::read_to_string(dir.path().join("b/summary.json")).unwrap());
    let s: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(s["dataset"]["input_separable"], false);
    assert_eq!(s["features"]["separable"], true);
    assert!(s["feature_grid"]["agreement"].as_f64().is_some());
    assert!(s["feature_grid"]["normal_angle_deg"].as_f64().is_some());
    for f in ["dataset.csv", "features.csv", "svm.json", "trace.json", "feature_grid.csv", "input_grid.csv", "figure.svg"] {
        assert!(dir.path().join("a").join(f).exists(), "{f}");
    }
}

#[test]
fn pipeline_names_the_failing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SECTOR_OVERLAP
        .replace("learning_rate = 0.01", "learning_rate = 0.0")
        .replace("max_iterations = 20000", "max_iterations = 10");
    fs::write(dir.path().join("c.toml"), cfg).unwrap();
    let o = lastlayer(&["pipeline", "--config", "c.toml", "--out-dir", "out"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("stage `svm`"));
}

#[test]
fn pipeline_honours_format_subset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("formats = [\"json\"]\n{SECTOR_OVERLAP}");
    fs::write(dir.path().join("c.toml"), cfg).unwrap();
    let o = lastlayer(&["pipeline", "--config", "c.toml", "--out-dir", "out"], dir.path());
    assert_eq!(code(&o), 0);
    let out = dir.path().join("out");
    assert!(out.join("summary.json").exists());
    assert!(out.join("svm.json").exists());
    assert!(!out.join("figure.svg").exists());
    assert!(!out.join("dataset.csv").exists());
}
