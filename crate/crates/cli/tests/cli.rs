use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_actsparse"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).args(["--log-level", "warn"]).output().unwrap()
}

fn reference_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.json")
}

const TRAIN: &str = r#"{
    "model": {"d_model": 8, "d_ff": 32, "num_layers": 2, "output_dim": 4, "seed": 1},
    "task": {"teacher_seed": 2, "val_size": 64, "probe_size": 64,
             "input": {"kind": "clustered", "centers": 8, "spread": 0.5}},
    "method": {"kind": "progressive", "substitution_steps": 10,
               "schedule": {"stages": [{"peak_lambda": 1e-3, "end_step": 10},
                                       {"peak_lambda": 1e-2, "end_step": 40}]},
               "sweep": {"candidates": [0.01, 0.05, 0.1]}},
    "total_steps": 60, "batch_size": 8, "eval_every": 10, "pretrain_steps": 20,
    "lr": {"peak_lr": 0.05}
}"#;

const PIPELINE: &str = r#"{
    "model": {"d_model": 8, "d_ff": 32, "num_layers": 2, "output_dim": 4, "seed": 1},
    "task": {"teacher_seed": 2, "val_size": 64, "probe_size": 64},
    "training": {"total_steps": 40, "batch_size": 8, "eval_every": 10, "lr": {"peak_lr": 0.05}},
    "progressive": {"substitution_steps": 10,
                    "schedule": {"stages": [{"peak_lambda": 1e-3, "end_step": 10},
                                            {"peak_lambda": 1e-2, "end_step": 30}]},
                    "sweep": {"candidates": [0.01, 0.05]}},
    "baselines": {"shifted_relu_biases": [0.5]},
    "predictor": {"pairs": 100, "epochs": 1},
    "bench": {"d_model": 8, "d_ff": 32, "sparsity": [0.0, 0.5], "trials": 2, "warmup": 0}
}"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_reference_config_is_clean() {
    let out = run(&["validate", "--config", s(&reference_config())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn validate_reports_schedule_problems_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = PIPELINE.replace(r#""peak_lambda": 1e-2"#, r#""peak_lambda": 1e-4"#);
    let p = write(dir.path(), "bad.json", &bad);
    let out = run(&["validate", "--config", s(&p)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("non-decreasing"));
}

#[test]
fn parse_errors_exit_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "broken.json", "{\n  \"model\": [\n");
    let out = run(&["validate", "--config", s(&p)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn missing_file_is_a_runtime_failure() {
    let out = run(&["validate", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_then_sweep_and_predict() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "train.json", TRAIN);
    let model_dir = dir.path().join("run");
    let out = run(&["train", "--config", s(&cfg), "--out", s(&model_dir), "--threads", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["model.json", "model.bin", "history.csv", "summary.json"] {
        assert!(model_dir.join(f).exists(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(model_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["updates"], 60);

    let sweep_dir = dir.path().join("sweep");
    let out = run(&["sweep-threshold", "--model", s(&model_dir), "--candidates", "0.01,0.02", "--out", s(&sweep_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(sweep_dir.join("sweep.csv")).unwrap();
    assert!(text.starts_with("threshold,sparsity,val_loss,chosen\n"));
    assert_eq!(text.lines().count(), 4);

    let pred_dir = dir.path().join("pred");
    let out = run(&[
        "predictor", "train", "--model", s(&model_dir), "--layer", "1", "--pairs", "200", "--epochs", "2", "--out",
        s(&pred_dir),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(pred_dir.join("predictor_metrics.csv")).unwrap();
    assert!(text.starts_with("layer,recall,predicted_sparsity\n1,"));

    let out = run(&["predictor", "train", "--model", s(&model_dir), "--layer", "5", "--out", s(&pred_dir)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_seed_override_changes_result() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "train.json", TRAIN);
    let read = |sub: &str, seed: &str| {
        let o = dir.path().join(sub);
        let out = run(&["train", "--config", s(&cfg), "--out", s(&o), "--seed", seed]);
        assert_eq!(out.status.code(), Some(0));
        std::fs::read_to_string(o.join("history.csv")).unwrap()
    };
    assert_eq!(read("a", "4"), read("b", "4"));
    assert_ne!(read("a", "4"), read("c", "5"));
}

#[test]
fn compare_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.json", TRAIN);
    let vanilla = TRAIN.replace(
        r#"{"kind": "progressive", "substitution_steps": 10,
               "schedule": {"stages": [{"peak_lambda": 1e-3, "end_step": 10},
                                       {"peak_lambda": 1e-2, "end_step": 40}]},
               "sweep": {"candidates": [0.01, 0.05, 0.1]}}"#,
        r#"{"kind": "vanilla_relu"}"#,
    );
    assert_ne!(vanilla, TRAIN);
    let b = write(dir.path(), "b.json", &vanilla);
    let o = dir.path().join("cmp");
    let out = run(&["compare", "--configs", s(&a), s(&b), "--out", s(&o)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(o.join("comparison.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "method,sparsity,val_loss,updates");
    assert!(lines[1].starts_with("progressive,"));
    assert!(lines[2].starts_with("vanilla_relu,"));
}

#[test]
fn bench_writes_csv_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("b").join("bench.csv");
    let out = run(&[
        "bench", "--d-model", "16", "--d-ff", "64", "--sparsity", "0.0,0.5", "--trials", "3", "--out", s(&p),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(text.starts_with("# arch="));
    assert!(text.contains("step,sparsity,median_us,min_us,p90_us,speedup_vs_dense"));
    let out = run(&["bench", "--sparsity", "1.0", "--trials", "1", "--out", s(&p)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pipeline_runs_and_rejects_unsupported_kernel_activation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.json", PIPELINE);
    let o = dir.path().join("pipe");
    let out = run(&["pipeline", "--config", s(&cfg), "--out", s(&o)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["history.csv", "layerwise.csv", "sparsity.csv", "comparison.csv", "predictor_metrics.csv", "bench.csv", "summary.json", "manifest.json"] {
        assert!(o.join(f).exists(), "{f}");
    }

    let shifted = PIPELINE.replace(r#""warmup": 0"#, r#""warmup": 0, "activation": {"kind": "shifted_relu", "bias": 0.1}"#);
    let cfg = write(dir.path(), "shifted.json", &shifted);
    let o = dir.path().join("rejected");
    let out = run(&["pipeline", "--config", s(&cfg), "--out", s(&o)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsupported activation for sparse kernels"));
    assert!(!o.exists());
}
