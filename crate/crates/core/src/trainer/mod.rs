//! Training loop for the ReLUfication pipeline and its baselines.
//!
//! Every run starts from the same Swish checkpoint (a pretraining phase that
//! depends only on the model, task, optimizer and seed), then trains for
//! exactly `total_steps` updates under one of the methods below. Per-step
//! loss is the task MSE plus `λ` times the summed L1 norm of every layer's
//! `x_1`.

mod task;

pub use task::{mse, InputDistribution, Task, TaskConfig};

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::error::{Error, Result};
use crate::gated_ffn::{init_model, ModelConfig, ParamGrads, ToyModel};
use crate::numerics::SeededRng;
use crate::optim::{OptimizerConfig, Sgd};
use crate::regularization::{l1_norm, LrSchedule, RegularizationSchedule};
use crate::sparsity::{measure, threshold_sweep, SparsityReport, ThresholdSweepResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub candidates: Vec<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    0.01
}

/// Training recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    /// Keep training the Swish model.
    Original,
    /// Swap to ReLU, train without regularization.
    VanillaRelu,
    /// Swap to `max(z - bias, 0)`, train without regularization.
    ShiftedRelu { bias: f64 },
    /// Swap to ReLU, train with a constant L1 factor.
    FixedL1 { lambda: f64 },
    /// Swap to ReLU, train `substitution_steps` without regularization, then
    /// follow `schedule` (holding its last factor for any remaining steps),
    /// then pick a FATReLU threshold by `sweep`.
    Progressive {
        substitution_steps: u64,
        schedule: RegularizationSchedule,
        sweep: SweepConfig,
    },
}

impl Method {
    pub fn activation(&self) -> ActivationKind {
        match *self {
            Method::Original => ActivationKind::Swish,
            Method::ShiftedRelu { bias } => ActivationKind::ShiftedRelu { bias },
            _ => ActivationKind::Relu,
        }
    }

    /// `(λ, stage)` at 1-based step `t`. Stage 0 means no schedule is active;
    /// `S + 1` marks steps after the schedule has finished.
    pub fn lambda_at(&self, t: u64) -> Result<(f64, u32)> {
        Ok(match self {
            Method::FixedL1 { lambda } => (*lambda, 0),
            Method::Progressive {
                substitution_steps,
                schedule,
                ..
            } => {
                if t <= *substitution_steps {
                    (0.0, 0)
                } else {
                    let ts = t - substitution_steps;
                    if ts <= schedule.end_step() {
                        (schedule.lambda_at(ts)?, schedule.stage_of(ts)? as u32)
                    } else {
                        let last = schedule.stages().last().unwrap().peak_lambda;
                        (last, schedule.num_stages() as u32 + 1)
                    }
                }
            }
            _ => (0.0, 0),
        })
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Original => write!(f, "original"),
            Method::VanillaRelu => write!(f, "vanilla_relu"),
            Method::ShiftedRelu { bias } => write!(f, "shifted_relu(b={bias})"),
            Method::FixedL1 { lambda } => write!(f, "fixed_l1(lambda={lambda})"),
            Method::Progressive { .. } => write!(f, "progressive"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrConfig {
    pub peak_lr: f64,
    /// Defaults to 1% of the run length.
    #[serde(default)]
    pub warmup_steps: Option<u64>,
}

impl LrConfig {
    pub fn schedule(&self, total_steps: u64) -> Result<LrSchedule> {
        match self.warmup_steps {
            Some(w) => LrSchedule::new(self.peak_lr, total_steps, w),
            None => LrSchedule::with_default_warmup(self.peak_lr, total_steps),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub task: TaskConfig,
    pub method: Method,
    pub total_steps: u64,
    pub batch_size: usize,
    pub eval_every: u64,
    /// Swish steps producing the shared starting checkpoint.
    #[serde(default)]
    pub pretrain_steps: u64,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    pub lr: LrConfig,
    #[serde(default)]
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut out = self.model.validate();
        out.extend(self.task.validate());
        out.extend(self.optimizer.validate());
        if self.total_steps == 0 {
            out.push("total_steps must be >= 1".into());
        }
        if self.batch_size == 0 {
            out.push("batch_size must be >= 1".into());
        }
        if self.eval_every == 0 {
            out.push("eval_every must be >= 1".into());
        }
        if let Err(e) = self.lr.schedule(self.total_steps.max(1)) {
            out.push(e.to_string());
        }
        if self.pretrain_steps > 0 {
            if let Err(e) = self.lr.schedule(self.pretrain_steps) {
                out.push(format!("pretraining: {e}"));
            }
        }
        match &self.method {
            Method::ShiftedRelu { bias } if !(*bias >= 0.0) => {
                out.push(format!("shifted_relu bias must be >= 0, got {bias}"))
            }
            Method::FixedL1 { lambda } if !(*lambda >= 0.0) => {
                out.push(format!("fixed_l1 lambda must be >= 0, got {lambda}"))
            }
            Method::Progressive {
                substitution_steps,
                schedule,
                sweep,
            } => {
                let needed = substitution_steps + schedule.end_step();
                if self.total_steps < needed {
                    out.push(format!(
                        "total_steps ({}) must cover substitution_steps + schedule end ({needed})",
                        self.total_steps
                    ));
                }
                if sweep.candidates.is_empty() {
                    out.push("sweep.candidates must not be empty".into());
                }
                if sweep.candidates.iter().any(|&t| !(t > 0.0))
                    || sweep.candidates.windows(2).any(|w| w[1] < w[0])
                {
                    out.push("sweep.candidates must be positive and ascending".into());
                }
                if !(sweep.tolerance >= 0.0) {
                    out.push("sweep.tolerance must be >= 0".into());
                }
            }
            _ => {}
        }
        out
    }

    fn ensure_valid(&self) -> Result<()> {
        let problems = self.validate();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Key identifying the pretraining phase.
    fn pretrain_key(&self) -> String {
        serde_json::json!({
            "model": self.model,
            "task": self.task,
            "steps": self.pretrain_steps,
            "batch": self.batch_size,
            "optimizer": self.optimizer,
            "lr": self.lr,
            "seed": self.seed,
        })
        .to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub step: u64,
    pub stage: u32,
    /// Average sparsity on the probe corpus after this step's update.
    pub sparsity: f64,
    /// `task_loss + lambda * l1`.
    pub train_loss: f64,
    pub task_loss: f64,
    /// Unscaled summed L1 norm of `x_1`, averaged over the batch.
    pub l1: f64,
    pub val_loss: f64,
    pub lambda: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub method: String,
    /// Optimizer updates applied after pretraining.
    pub updates: u64,
    pub records: Vec<HistoryRecord>,
}

impl TrainHistory {
    pub fn write_csv(histories: &[&TrainHistory], path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "method", "step", "stage", "sparsity", "train_loss", "task_loss", "l1", "val_loss", "lambda", "lr",
        ])?;
        for h in histories {
            for r in &h.records {
                w.write_record([
                    h.method.clone(),
                    r.step.to_string(),
                    r.stage.to_string(),
                    r.sparsity.to_string(),
                    r.train_loss.to_string(),
                    r.task_loss.to_string(),
                    r.l1.to_string(),
                    r.val_loss.to_string(),
                    r.lambda.to_string(),
                    r.lr.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Result of one training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ToyModel<f64>,
    pub history: TrainHistory,
    /// Probe sparsity before threshold shifting (progressive runs only).
    pub pre_shift: Option<SparsityReport>,
    pub sweep: Option<ThresholdSweepResult>,
    pub final_report: SparsityReport,
    pub final_val_loss: f64,
}

/// Same weights, `new_kind` on every layer.
pub fn substitute_activation(model: &ToyModel<f64>, new_kind: ActivationKind) -> ToyModel<f64> {
    model.with_activation(new_kind)
}

/// Swish checkpoint every method starts from.
pub fn pretrain(cfg: &TrainConfig, task: &Task) -> Result<ToyModel<f64>> {
    let init_cfg = ModelConfig {
        activation: ActivationKind::Swish,
        ..cfg.model.clone()
    };
    let mut model = init_model(&init_cfg, &mut SeededRng::new(cfg.model.seed))?;
    if cfg.pretrain_steps == 0 {
        return Ok(model);
    }
    let lr = cfg.lr.schedule(cfg.pretrain_steps)?;
    let mut opt = Sgd::new(cfg.optimizer, model.param_count());
    let mut rng = SeededRng::new(cfg.seed).fork(1);
    for t in 1..=cfg.pretrain_steps {
        let (xs, ys) = task.sample_batch(cfg.batch_size, &mut rng)?;
        let stats = sgd_step(&mut model, &mut opt, &xs, &ys, 0.0, lr.lr_at(t)?)?;
        if !stats.task_loss.is_finite() {
            return Err(Error::Divergence {
                step: t,
                lambda: 0.0,
                detail: "non-finite loss during pretraining".into(),
            });
        }
    }
    debug!("pretraining done: val loss {}", task.val_loss(&model)?);
    Ok(model)
}

/// Pretrains, then runs the configured method.
pub fn run(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.ensure_valid()?;
    let task = Task::build(&cfg.model, &cfg.task)?;
    let start = pretrain(cfg, &task)?;
    run_from(cfg, &task, &start)
}

struct StepStats {
    task_loss: f64,
    l1: f64,
}

/// One SGD update on `λ`-regularized MSE. Per-sample passes run in fixed
/// chunks whose partial gradients are summed in order, so results do not
/// depend on the thread count.
fn sgd_step(
    model: &mut ToyModel<f64>,
    opt: &mut Sgd,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    lambda: f64,
    lr: f64,
) -> Result<StepStats> {
    const CHUNK: usize = 4;
    let b = xs.len() as f64;
    let out_dim = model.output_dim() as f64;
    let pairs: Vec<(&Vec<f64>, &Vec<f64>)> = xs.iter().zip(ys).collect();
    let frozen = &*model;
    let partials: Vec<(ParamGrads<f64>, f64, f64)> = pairs
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grads = ParamGrads::zeros_like(frozen);
            let (mut task_loss, mut l1) = (0.0, 0.0);
            for (x, y) in chunk {
                let trace = frozen.forward(x)?;
                task_loss += task::sq_err(&trace.output, y);
                l1 += l1_norm(&trace);
                let g: Vec<f64> = trace
                    .output
                    .iter()
                    .zip(y.iter())
                    .map(|(o, t)| 2.0 * (o - t) / (out_dim * b))
                    .collect();
                frozen.backward_into(&trace, &g, lambda / b, &mut grads)?;
            }
            Ok((grads, task_loss, l1))
        })
        .collect::<Result<_>>()?;
    let mut iter = partials.into_iter();
    let (mut grads, mut task_loss, mut l1) = iter.next().expect("non-empty batch");
    for (g, t, l) in iter {
        grads.add_assign(&g);
        task_loss += t;
        l1 += l;
    }
    let mut flat = model.to_flat();
    opt.step(&mut flat, &grads.to_flat(), lr)?;
    model.set_flat(&flat)?;
    Ok(StepStats {
        task_loss: task_loss / b,
        l1: l1 / b,
    })
}

/// Runs the configured method from a given (pretrained) starting model.
pub fn run_from(cfg: &TrainConfig, task: &Task, start: &ToyModel<f64>) -> Result<TrainOutcome> {
    cfg.ensure_valid()?;
    let model = substitute_activation(start, cfg.method.activation());
    let (mut model, history) = train_loop(cfg, task, model)?;
    let (pre_shift, sweep) = match &cfg.method {
        Method::Progressive { sweep, .. } => {
            let pre = measure(&model, &task.probe, "probe")?.with_step(cfg.total_steps);
            let (shifted, result) = shift_threshold(&model, task, sweep)?;
            model = shifted;
            (Some(pre), Some(result))
        }
        _ => (None, None),
    };
    let final_report = measure(&model, &task.probe, "probe")?.with_step(cfg.total_steps);
    let final_val_loss = task.val_loss(&model)?;
    info!(
        "{}: final sparsity {:.4}, val loss {:.5}",
        history.method, final_report.average, final_val_loss
    );
    Ok(TrainOutcome {
        model,
        history,
        pre_shift,
        sweep,
        final_report,
        final_val_loss,
    })
}

/// The optimisation loop alone: `total_steps` updates of `model` as given,
/// with `λ` taken from the method.
pub fn train_loop(cfg: &TrainConfig, task: &Task, mut model: ToyModel<f64>) -> Result<(ToyModel<f64>, TrainHistory)> {
    cfg.ensure_valid()?;
    let lr_sched = cfg.lr.schedule(cfg.total_steps)?;
    let mut opt = Sgd::new(cfg.optimizer, model.param_count());
    let mut rng = SeededRng::new(cfg.seed).fork(2);
    let label = cfg.method.label();
    let mut records = Vec::new();
    for t in 1..=cfg.total_steps {
        let (lambda, stage) = cfg.method.lambda_at(t)?;
        let lr = lr_sched.lr_at(t)?;
        let (xs, ys) = task.sample_batch(cfg.batch_size, &mut rng)?;
        let stats = sgd_step(&mut model, &mut opt, &xs, &ys, lambda, lr)?;
        let train_loss = stats.task_loss + lambda * stats.l1;
        if !train_loss.is_finite() || model.to_flat().iter().any(|w| !w.is_finite()) {
            return Err(Error::Divergence {
                step: t,
                lambda,
                detail: format!("{label}: train loss {train_loss}"),
            });
        }
        if t % cfg.eval_every == 0 || t == cfg.total_steps {
            let sparsity = measure(&model, &task.probe, "probe")?.average;
            let val_loss = task.val_loss(&model)?;
            debug!("{label} step {t}: sparsity {sparsity:.4} val {val_loss:.5} lambda {lambda:.3e}");
            records.push(HistoryRecord {
                step: t,
                stage,
                sparsity,
                train_loss,
                task_loss: stats.task_loss,
                l1: stats.l1,
                val_loss,
                lambda,
                lr,
            });
        }
    }
    let history = TrainHistory {
        method: label,
        updates: cfg.total_steps,
        records,
    };
    Ok((model, history))
}

/// Sweeps FATReLU thresholds on the probe set against validation loss and
/// returns the model with the chosen threshold (plain ReLU if none passes).
pub fn shift_threshold(
    model: &ToyModel<f64>,
    task: &Task,
    sweep: &SweepConfig,
) -> Result<(ToyModel<f64>, ThresholdSweepResult)> {
    let result = threshold_sweep(
        model,
        &sweep.candidates,
        &task.probe,
        |m| task.val_loss(m),
        sweep.tolerance,
    )?;
    Ok((model.with_activation(result.chosen_activation()), result))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub sparsity: f64,
    pub val_loss: f64,
    pub updates: u64,
    /// `(corpus label, average sparsity)` for each extra corpus.
    pub corpora: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub outcomes: Vec<TrainOutcome>,
}

impl Comparison {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["method", "sparsity", "val_loss", "updates"])?;
        for r in &self.rows {
            w.write_record([
                r.method.clone(),
                r.sparsity.to_string(),
                r.val_loss.to_string(),
                r.updates.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Trains every config (in parallel) and tabulates final sparsity and
/// validation loss. Configs with identical pretraining settings share one
/// pretrained checkpoint.
pub fn compare_methods(configs: &[TrainConfig], corpora: &[(String, Vec<Vec<f64>>)]) -> Result<Comparison> {
    for c in configs {
        c.ensure_valid()?;
    }
    let mut starts: HashMap<String, (Task, ToyModel<f64>)> = HashMap::new();
    for c in configs {
        if let Entry::Vacant(slot) = starts.entry(c.pretrain_key()) {
            let task = Task::build(&c.model, &c.task)?;
            let start = pretrain(c, &task)?;
            slot.insert((task, start));
        }
    }
    let outcomes: Vec<TrainOutcome> = configs
        .par_iter()
        .map(|c| {
            let (task, start) = &starts[&c.pretrain_key()];
            run_from(c, task, start)
        })
        .collect::<Result<_>>()?;
    let rows = comparison_rows(&outcomes, corpora)?;
    Ok(Comparison { rows, outcomes })
}

/// One row per outcome, with sparsity on each extra corpus.
pub fn comparison_rows(outcomes: &[TrainOutcome], corpora: &[(String, Vec<Vec<f64>>)]) -> Result<Vec<ComparisonRow>> {
    outcomes
        .iter()
        .map(|o| {
            let corpora = corpora
                .iter()
                .map(|(label, xs)| Ok((label.clone(), measure(&o.model, xs, label)?.average)))
                .collect::<Result<_>>()?;
            Ok(ComparisonRow {
                method: o.history.method.clone(),
                sparsity: o.final_report.average,
                val_loss: o.final_val_loss,
                updates: o.history.updates,
                corpora,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularization::Stage;

    pub(crate) fn small_cfg(method: Method) -> TrainConfig {
        TrainConfig {
            model: ModelConfig {
                d_model: 8,
                d_ff: 32,
                num_layers: 2,
                output_dim: 4,
                activation: ActivationKind::Swish,
                init_scale: 1.0,
                seed: 3,
            },
            task: serde_json::from_str(r#"{"teacher_seed": 11, "val_size": 64, "probe_size": 64}"#).unwrap(),
            method,
            total_steps: 60,
            batch_size: 8,
            eval_every: 10,
            pretrain_steps: 20,
            optimizer: OptimizerConfig::default(),
            lr: LrConfig { peak_lr: 0.02, warmup_steps: None },
            seed: 5,
        }
    }

    fn progressive() -> Method {
        Method::Progressive {
            substitution_steps: 10,
            schedule: RegularizationSchedule::new(vec![
                Stage { peak_lambda: 1e-3, end_step: 10 },
                Stage { peak_lambda: 1e-2, end_step: 30 },
                Stage { peak_lambda: 1e-2, end_step: 40 },
            ])
            .unwrap(),
            sweep: SweepConfig { candidates: vec![0.01, 0.05], tolerance: 0.01 },
        }
    }

    #[test]
    fn fixed_l1_zero_equals_vanilla() {
        let a = run(&small_cfg(Method::VanillaRelu)).unwrap();
        let b = run(&small_cfg(Method::FixedL1 { lambda: 0.0 })).unwrap();
        assert_eq!(a.history.records, b.history.records);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn budget_parity_and_reproducibility() {
        for m in [Method::Original, Method::ShiftedRelu { bias: 0.2 }, progressive()] {
            let a = run(&small_cfg(m.clone())).unwrap();
            assert_eq!(a.history.updates, 60);
            assert_eq!(a.history.records.last().unwrap().step, 60);
            assert_eq!(a.history.records.len(), 6);
            let b = run(&small_cfg(m)).unwrap();
            assert_eq!(a.model.to_flat(), b.model.to_flat());
        }
    }

    #[test]
    fn loss_decomposition_and_lambda_log() {
        let cfg = small_cfg(progressive());
        let out = run(&cfg).unwrap();
        for r in &out.history.records {
            assert!((r.train_loss - (r.task_loss + r.lambda * r.l1)).abs() < 1e-10);
            let (lambda, stage) = cfg.method.lambda_at(r.step).unwrap();
            assert_eq!(r.lambda, lambda);
            assert_eq!(r.stage, stage);
            if r.step > 10 && r.step <= 50 {
                let Method::Progressive { schedule, .. } = &cfg.method else { unreachable!() };
                assert_eq!(r.lambda, schedule.lambda_at(r.step - 10).unwrap());
            }
        }
        assert!(out.sweep.is_some() && out.pre_shift.is_some());
    }

    #[test]
    fn substitution_round_trip_and_sparsity_jump() {
        let cfg = small_cfg(Method::Original);
        let task = Task::build(&cfg.model, &cfg.task).unwrap();
        let swish = init_model(&cfg.model, &mut SeededRng::new(1)).unwrap();
        let relu = substitute_activation(&swish, ActivationKind::Relu);
        assert_eq!(substitute_activation(&relu, ActivationKind::Swish), swish);
        let before = measure(&swish, &task.probe, "p").unwrap().average;
        let after = measure(&relu, &task.probe, "p").unwrap().average;
        assert!(before < 0.05, "{before}");
        assert!((after - 0.5).abs() < 0.1, "{after}");
        let x = &task.probe[0];
        assert_ne!(swish.predict(x).unwrap(), relu.predict(x).unwrap());
    }

    #[test]
    fn divergence_names_step_and_lambda() {
        let mut cfg = small_cfg(Method::FixedL1 { lambda: 0.5 });
        cfg.lr.peak_lr = 1e6;
        cfg.pretrain_steps = 0;
        match run(&cfg) {
            Err(Error::Divergence { step, lambda, .. }) => {
                assert!(step >= 1);
                assert_eq!(lambda, 0.5);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = small_cfg(progressive());
        cfg.total_steps = 30;
        assert!(matches!(run(&cfg), Err(Error::Config(_))));
        let mut cfg = small_cfg(Method::VanillaRelu);
        cfg.batch_size = 0;
        assert!(!cfg.validate().is_empty());
    }

    #[test]
    fn compare_shares_pretraining_and_reports_corpora() {
        let configs = vec![small_cfg(Method::VanillaRelu), small_cfg(Method::FixedL1 { lambda: 0.0 })];
        let corpus = InputDistribution::default().sample(8, 10, &mut SeededRng::new(0));
        let cmp = compare_methods(&configs, &[("g".into(), corpus)]).unwrap();
        assert_eq!(cmp.rows.len(), 2);
        assert_eq!(cmp.rows[0].sparsity, cmp.rows[1].sparsity);
        assert_eq!(cmp.rows[0].corpora[0].0, "g");
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = small_cfg(progressive());
        let text = serde_json::to_string(&cfg).unwrap();
        let back: TrainConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
