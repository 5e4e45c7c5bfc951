use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::PipelineConfig;
use crate::activations::ActivationKind;
use crate::error::{Error, Result};
use crate::gated_ffn::ToyModel;
use crate::kernels::bench::{bench, BenchTable};
use crate::numerics::SeededRng;
use crate::predictor::{collect_pairs, evaluate_predictor, train_predictor, write_metrics_csv, PredictorMetrics};
use crate::sparsity::{measure, write_reports_csv, SparsityReport, ThresholdSweepResult};
use crate::trainer::{
    comparison_rows, pretrain, run_from, shift_threshold, substitute_activation, train_loop, Comparison,
    ComparisonRow, Task, TrainHistory, TrainOutcome,
};

/// Pipeline stages in execution order.
pub const STAGES: [&str; 9] = [
    "pretrain",
    "substitution",
    "progressive_regularization",
    "threshold_shifting",
    "baselines",
    "measure",
    "predictor",
    "bench",
    "report",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub experiment_id: String,
    pub config_path: Option<PathBuf>,
    /// sha256 of the config file bytes, and of the resolved config.
    pub config_hashes: BTreeMap<String, String>,
    pub versions: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub stage_order: Vec<String>,
    pub artifacts: Vec<String>,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Loads `config_path`, optionally overriding its seed, and runs the
/// pipeline into `out_dir`.
pub fn run_pipeline(config_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<ExperimentManifest> {
    let bytes = std::fs::read(config_path).map_err(|e| Error::io(config_path, e))?;
    let text = String::from_utf8_lossy(&bytes);
    let mut cfg = PipelineConfig::from_json(&text, config_path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let mut hashes = BTreeMap::new();
    hashes.insert("config_file".to_string(), sha256_hex(&bytes));
    run_inner(&cfg, out_dir, Some(config_path.to_path_buf()), hashes)
}

pub fn run_pipeline_config(cfg: &PipelineConfig, out_dir: &Path) -> Result<ExperimentManifest> {
    run_inner(cfg, out_dir, None, BTreeMap::new())
}

struct Run<'a> {
    out: &'a Path,
    manifest: ExperimentManifest,
    stage_ms: BTreeMap<String, f64>,
}

impl Run<'_> {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Vec<String>) -> Result<T>) -> Result<T> {
        info!("stage {name}");
        let start = Instant::now();
        let mut written = Vec::new();
        let result = f(&mut written);
        self.manifest.artifacts.extend(written);
        self.stage_ms
            .insert(name.to_string(), start.elapsed().as_secs_f64() * 1e3);
        match result {
            Ok(v) => {
                self.manifest.stage_order.push(name.to_string());
                Ok(v)
            }
            Err(e) => {
                self.manifest.failed_stage = Some(name.to_string());
                self.manifest.error = Some(e.to_string());
                self.write_manifest()?;
                Err(Error::Stage {
                    stage: name.to_string(),
                    source: Box::new(e),
                })
            }
        }
    }

    fn write_manifest(&mut self) -> Result<()> {
        self.manifest.finished_unix_ms = now_ms();
        let path = self.out.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest)? + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn run_inner(
    cfg: &PipelineConfig,
    out_dir: &Path,
    config_path: Option<PathBuf>,
    mut hashes: BTreeMap<String, String>,
) -> Result<ExperimentManifest> {
    let problems = cfg.diagnostics();
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let resolved = serde_json::to_vec(cfg)?;
    let resolved_hash = sha256_hex(&resolved);
    hashes.insert("resolved_config".to_string(), resolved_hash.clone());
    let mut seeds = BTreeMap::new();
    seeds.insert("pipeline".to_string(), cfg.seed);
    seeds.insert("model_init".to_string(), cfg.model.seed);
    seeds.insert("teacher".to_string(), cfg.task.teacher_seed);
    seeds.insert("data".to_string(), cfg.task.data_seed);
    seeds.insert("predictor".to_string(), cfg.predictor.seed);
    let mut versions = BTreeMap::new();
    versions.insert("actsparse-core".to_string(), env!("CARGO_PKG_VERSION").to_string());
    let mut run = Run {
        out: out_dir,
        manifest: ExperimentManifest {
            experiment_id: resolved_hash[..16].to_string(),
            config_path,
            config_hashes: hashes,
            versions,
            seeds,
            stage_order: Vec::new(),
            artifacts: Vec::new(),
            failed_stage: None,
            error: None,
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
        },
        stage_ms: BTreeMap::new(),
    };

    let prog_cfg = cfg.progressive_config()?;
    let (task, start) = run.stage("pretrain", |_| {
        let task = Task::build(&cfg.model, &cfg.task)?;
        let start = pretrain(&prog_cfg, &task)?;
        Ok((task, start))
    })?;

    let relu = run.stage("substitution", |_| Ok(substitute_activation(&start, ActivationKind::Relu)))?;
    let substituted = measure(&relu, &task.probe, "probe")?.with_step(0);

    let (trained, history) = run.stage("progressive_regularization", |_| train_loop(&prog_cfg, &task, relu))?;

    let out = run.path("");
    let (final_model, pre_shift, post_shift, sweep) = run.stage("threshold_shifting", |w| {
        let pre = measure(&trained, &task.probe, "probe")?.with_step(prog_cfg.total_steps);
        let (shifted, sweep) = shift_threshold(&trained, &task, &cfg.progressive.sweep)?;
        let post = measure(&shifted, &task.probe, "probe")?.with_step(prog_cfg.total_steps);
        write_sweep_csv(&out.join("sweep.csv"), &sweep)?;
        w.push("sweep.csv".into());
        write_layerwise_csv(&out.join("layerwise.csv"), &pre, &post)?;
        w.push("layerwise.csv".into());
        let extra = json!({
            "model": cfg.model,
            "task": cfg.task,
            "activation": shifted.layers()[0].activation,
            "method": "progressive",
        });
        shifted.save(&out.join("model"), extra)?;
        w.push("model.json".into());
        w.push("model.bin".into());
        Ok((shifted, pre, post, sweep))
    })?;
    let final_val_loss = task.val_loss(&final_model)?;

    let comparison = run.stage("baselines", |w| {
        let outcomes: Vec<TrainOutcome> = cfg
            .baseline_configs()?
            .par_iter()
            .map(|c| run_from(c, &task, &start))
            .collect::<Result<_>>()?;
        let mut all = vec![TrainOutcome {
            model: final_model.clone(),
            history: history.clone(),
            pre_shift: Some(pre_shift.clone()),
            sweep: Some(sweep.clone()),
            final_report: post_shift.clone(),
            final_val_loss,
        }];
        all.extend(outcomes);
        let rows = comparison_rows(&all, &[])?;
        let comparison = Comparison { rows, outcomes: all };
        comparison.write_csv(&out.join("comparison.csv"))?;
        w.push("comparison.csv".into());
        let histories: Vec<&TrainHistory> = comparison.outcomes.iter().map(|o| &o.history).collect();
        TrainHistory::write_csv(&histories, &out.join("history.csv"))?;
        w.push("history.csv".into());
        Ok(comparison)
    })?;

    let corpus_reports = run.stage("measure", |w| {
        let mut reports = vec![post_shift.clone()];
        for c in &cfg.corpora {
            let xs = c.sample(cfg.model.d_model);
            reports.push(measure(&final_model, &xs, &c.label)?.with_step(prog_cfg.total_steps));
        }
        write_reports_csv(&out.join("sparsity.csv"), &reports)?;
        w.push("sparsity.csv".into());
        Ok(reports)
    })?;

    let predictor_metrics = run.stage("predictor", |w| {
        let pc = &cfg.predictor;
        let corpus = task
            .input
            .sample(cfg.model.d_model, pc.pairs, &mut SeededRng::new(cfg.seed).fork(7));
        let metrics: Vec<PredictorMetrics> = (0..final_model.num_layers())
            .into_par_iter()
            .map(|layer| {
                let ds = collect_pairs(&final_model, &corpus, layer, pc.pairs, pc.seed)?;
                let (p, _) = train_predictor(&ds, pc)?;
                evaluate_predictor(&p, &ds)
            })
            .collect::<Result<_>>()?;
        write_metrics_csv(&out.join("predictor_metrics.csv"), &metrics)?;
        w.push("predictor_metrics.csv".into());
        Ok(metrics)
    })?;

    let bench_table = run.stage("bench", |w| match &cfg.bench {
        Some(b) => {
            let table = bench(b)?;
            table.write_csv(&out.join("bench.csv"))?;
            w.push("bench.csv".into());
            Ok(Some(table))
        }
        None => Ok(None),
    })?;

    let mut stage_order = run.manifest.stage_order.clone();
    stage_order.push("report".into());
    let summary = summary_json(
        &stage_order,
        &substituted,
        &comparison.rows,
        &pre_shift,
        &post_shift,
        &sweep,
        &corpus_reports,
        &predictor_metrics,
        bench_table.as_ref(),
        &run.stage_ms,
    );
    run.stage("report", |w| {
        let path = out.join("summary.json");
        let text = serde_json::to_string_pretty(&summary)? + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        w.push("summary.json".into());
        w.push("manifest.json".into());
        Ok(())
    })?;
    run.write_manifest()?;
    Ok(run.manifest)
}

fn write_sweep_csv(path: &Path, sweep: &ThresholdSweepResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["threshold", "sparsity", "val_loss", "chosen"])?;
    w.write_record([
        "0".to_string(),
        sweep.baseline_sparsity.to_string(),
        sweep.baseline_loss.to_string(),
        sweep.chosen.is_none().to_string(),
    ])?;
    for p in &sweep.points {
        w.write_record([
            p.threshold.to_string(),
            p.sparsity.to_string(),
            p.val_loss.to_string(),
            (sweep.chosen == Some(p.threshold)).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn write_layerwise_csv(path: &Path, pre: &SparsityReport, post: &SparsityReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["layer", "pre_shift", "post_shift"])?;
    for (layer, (a, b)) in pre.per_layer.iter().zip(&post.per_layer).enumerate() {
        w.write_record([layer.to_string(), a.to_string(), b.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Headline numbers. Everything outside `timing` is a copy or a mean of
/// values in the CSV artifacts.
#[allow(clippy::too_many_arguments)]
fn summary_json(
    stage_order: &[String],
    substituted: &SparsityReport,
    rows: &[ComparisonRow],
    pre: &SparsityReport,
    post: &SparsityReport,
    sweep: &ThresholdSweepResult,
    corpora: &[SparsityReport],
    predictors: &[PredictorMetrics],
    bench: Option<&BenchTable>,
    stage_ms: &BTreeMap<String, f64>,
) -> Value {
    let methods: Vec<Value> = rows
        .iter()
        .map(|r| json!({"method": r.method, "sparsity": r.sparsity, "val_loss": r.val_loss, "updates": r.updates}))
        .collect();
    let corpora: BTreeMap<String, f64> = corpora
        .iter()
        .map(|r| (r.corpus_label.clone().unwrap_or_default(), r.average))
        .collect();
    json!({
        "stage_order": stage_order,
        "substitution_sparsity": substituted.average,
        "methods": methods,
        "progressive": {
            "threshold": sweep.chosen,
            "pre_shift_sparsity": pre.average,
            "post_shift_sparsity": post.average,
            "pre_shift_per_layer": pre.per_layer,
            "post_shift_per_layer": post.per_layer,
        },
        "corpora": corpora,
        "predictor": {
            "mean_recall": mean(predictors.iter().map(|m| m.recall)),
            "mean_predicted_sparsity": mean(predictors.iter().map(|m| m.predicted_sparsity)),
            "per_layer": predictors,
        },
        "timing": {
            "stage_ms": stage_ms,
            "bench": bench.map(|b| &b.rows),
        },
    })
}

/// `summary.json` without its `timing` field.
pub fn strip_timing(mut summary: Value) -> Value {
    if let Some(obj) = summary.as_object_mut() {
        obj.remove("timing");
    }
    summary
}

/// Convenience for tests and the CLI: load the model a pipeline or `train`
/// run saved in `dir`, along with its task.
pub fn load_run_model(dir: &Path) -> Result<(ToyModel<f64>, Task)> {
    let (model, extra) = ToyModel::load(&dir.join("model"))?;
    let model_cfg = serde_json::from_value(extra["model"].clone())?;
    let task_cfg = serde_json::from_value(extra["task"].clone())?;
    let task = Task::build(&model_cfg, &task_cfg)?;
    Ok((model, task))
}

#[cfg(test)]
mod tests {
    use super::super::tests::small_config_json;
    use super::*;

    #[test]
    fn pipeline_writes_all_artifacts_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("cfg.json");
        std::fs::write(&cfg_path, small_config_json()).unwrap();
        let a = run_pipeline(&cfg_path, &dir.path().join("a"), None).unwrap();
        let b = run_pipeline(&cfg_path, &dir.path().join("b"), None).unwrap();
        assert_eq!(a.stage_order, STAGES.iter().map(|s| s.to_string()).collect::<Vec<_>>());
        for f in [
            "history.csv",
            "layerwise.csv",
            "sparsity.csv",
            "comparison.csv",
            "predictor_metrics.csv",
            "bench.csv",
            "sweep.csv",
            "summary.json",
            "manifest.json",
            "model.json",
            "model.bin",
        ] {
            assert!(a.artifacts.iter().any(|x| x == f), "{f} not listed");
            assert!(dir.path().join("a").join(f).exists(), "{f} missing");
        }
        let read = |d: &str| -> Value {
            strip_timing(serde_json::from_slice(&std::fs::read(dir.path().join(d).join("summary.json")).unwrap()).unwrap())
        };
        assert_eq!(read("a"), read("b"));
        assert_eq!(a.config_hashes, b.config_hashes);
        let c = run_pipeline(&cfg_path, &dir.path().join("c"), Some(99)).unwrap();
        assert_ne!(a.experiment_id, c.experiment_id);

        let (model, task) = load_run_model(&dir.path().join("a")).unwrap();
        assert_eq!(model.num_layers(), 2);
        assert_eq!(task.probe.len(), 64);
    }

    #[test]
    fn summary_is_rederivable_from_csvs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig::from_json(&small_config_json(), Path::new("x")).unwrap();
        run_pipeline_config(&cfg, dir.path()).unwrap();
        let summary: Value = serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
        let mut rdr = csv::Reader::from_path(dir.path().join("comparison.csv")).unwrap();
        for (rec, m) in rdr.records().zip(summary["methods"].as_array().unwrap()) {
            let rec = rec.unwrap();
            assert_eq!(rec[0], *m["method"].as_str().unwrap());
            assert_eq!(rec[1].parse::<f64>().unwrap(), m["sparsity"].as_f64().unwrap());
            assert_eq!(rec[2].parse::<f64>().unwrap(), m["val_loss"].as_f64().unwrap());
        }
        let mut rdr = csv::Reader::from_path(dir.path().join("layerwise.csv")).unwrap();
        let post: Vec<f64> = rdr.records().map(|r| r.unwrap()[2].parse().unwrap()).collect();
        let avg = post.iter().sum::<f64>() / post.len() as f64;
        assert_eq!(avg, summary["progressive"]["post_shift_sparsity"].as_f64().unwrap());
    }

    #[test]
    fn failing_stage_is_named_and_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::from_json(&small_config_json(), Path::new("x")).unwrap();
        cfg.training.lr.peak_lr = 1e9;
        match run_pipeline_config(&cfg, dir.path()) {
            Err(Error::Stage { stage, .. }) => assert_eq!(stage, "pretrain"),
            other => panic!("expected stage failure, got {other:?}"),
        }
        let m: ExperimentManifest =
            serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m.failed_stage.as_deref(), Some("pretrain"));
    }

    #[test]
    fn invalid_config_fails_before_training() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::from_json(&small_config_json(), Path::new("x")).unwrap();
        cfg.bench.as_mut().unwrap().activation = ActivationKind::ShiftedRelu { bias: 0.5 };
        let err = run_pipeline_config(&cfg, &dir.path().join("out")).unwrap_err();
        assert!(err.to_string().contains("unsupported activation for sparse kernels"));
        assert!(!dir.path().join("out").exists());
    }
}
