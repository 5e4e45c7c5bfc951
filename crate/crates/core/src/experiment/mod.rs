//! End-to-end experiment driver: configuration, validation and the pipeline
//! that ties training, measurement, predictors and kernel timing together.

mod pipeline;

pub use pipeline::{load_run_model, run_pipeline, run_pipeline_config, strip_timing, ExperimentManifest, STAGES};

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::error::{Error, Result};
use crate::gated_ffn::ModelConfig;
use crate::kernels::bench::BenchConfig;
use crate::numerics::SeededRng;
use crate::optim::OptimizerConfig;
use crate::predictor::PredictorConfig;
use crate::regularization::{RegularizationSchedule, Stage};
use crate::trainer::{InputDistribution, LrConfig, Method, SweepConfig, TaskConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub total_steps: u64,
    pub batch_size: usize,
    pub eval_every: u64,
    #[serde(default)]
    pub pretrain_steps: u64,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    pub lr: LrConfig,
}

/// Stages are kept unvalidated here so that bad schedules surface as
/// diagnostics rather than parse errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub stages: Vec<Stage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgressiveSection {
    pub substitution_steps: u64,
    pub schedule: ScheduleSpec,
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    #[serde(default = "yes")]
    pub original: bool,
    #[serde(default = "yes")]
    pub vanilla_relu: bool,
    /// Uses the mean factor of the final schedule stage.
    #[serde(default = "yes")]
    pub fixed_l1: bool,
    #[serde(default = "default_biases")]
    pub shifted_relu_biases: Vec<f64>,
}

fn yes() -> bool {
    true
}

fn default_biases() -> Vec<f64> {
    vec![0.1, 0.3, 0.5, 1.0]
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            original: true,
            vanilla_relu: true,
            fixed_l1: true,
            shifted_relu_biases: default_biases(),
        }
    }
}

/// An extra evaluation corpus for per-corpus sparsity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub label: String,
    pub input: InputDistribution,
    pub size: usize,
    #[serde(default)]
    pub seed: u64,
}

impl CorpusConfig {
    pub fn sample(&self, d_model: usize) -> Vec<Vec<f64>> {
        self.input.sample(d_model, self.size, &mut SeededRng::new(self.seed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub model: ModelConfig,
    pub task: TaskConfig,
    pub training: TrainingSection,
    pub progressive: ProgressiveSection,
    #[serde(default)]
    pub baselines: BaselineSection,
    #[serde(default)]
    pub corpora: Vec<CorpusConfig>,
    #[serde(default)]
    pub predictor: PredictorConfig,
    #[serde(default)]
    pub bench: Option<BenchConfig>,
    #[serde(default)]
    pub seed: u64,
}

impl PipelineConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn schedule(&self) -> Result<RegularizationSchedule> {
        RegularizationSchedule::new(self.progressive.schedule.stages.clone())
    }

    fn train_config(&self, method: Method) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            model: self.model.clone(),
            task: self.task.clone(),
            method,
            total_steps: t.total_steps,
            batch_size: t.batch_size,
            eval_every: t.eval_every,
            pretrain_steps: t.pretrain_steps,
            optimizer: t.optimizer,
            lr: t.lr,
            seed: self.seed,
        }
    }

    pub fn progressive_config(&self) -> Result<TrainConfig> {
        Ok(self.train_config(Method::Progressive {
            substitution_steps: self.progressive.substitution_steps,
            schedule: self.schedule()?,
            sweep: self.progressive.sweep.clone(),
        }))
    }

    /// Baseline runs in a fixed order: original, vanilla ReLU, fixed L1,
    /// then Shifted ReLU by bias.
    pub fn baseline_configs(&self) -> Result<Vec<TrainConfig>> {
        let b = &self.baselines;
        let mut out = Vec::new();
        if b.original {
            out.push(self.train_config(Method::Original));
        }
        if b.vanilla_relu {
            out.push(self.train_config(Method::VanillaRelu));
        }
        if b.fixed_l1 {
            let lambda = self.schedule()?.final_stage_mean();
            out.push(self.train_config(Method::FixedL1 { lambda }));
        }
        for &bias in &b.shifted_relu_biases {
            out.push(self.train_config(Method::ShiftedRelu { bias }));
        }
        Ok(out)
    }

    /// Every problem found, each as one human-readable line. Empty means
    /// the config can be run.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.model.activation != ActivationKind::Swish {
            out.push(format!(
                "model.activation must be swish (the pipeline starts from a Swish model), got {}",
                self.model.activation
            ));
        }
        if let Some(bench) = &self.bench {
            out.extend(bench.validate());
        }
        let schedule_problems = RegularizationSchedule::check(&self.progressive.schedule.stages);
        out.extend(
            schedule_problems
                .iter()
                .map(|p| format!("progressive.schedule: {p}")),
        );
        if schedule_problems.is_empty() {
            // Schedule is valid, so the full training config can be checked.
            if let Ok(cfg) = self.progressive_config() {
                out.extend(cfg.validate());
            }
        } else {
            out.extend(self.train_config(Method::VanillaRelu).validate());
        }
        for &b in &self.baselines.shifted_relu_biases {
            if !(b >= 0.0) {
                out.push(format!("baselines.shifted_relu_biases: bias must be >= 0, got {b}"));
            }
        }
        let mut labels = HashSet::new();
        for c in &self.corpora {
            if c.size == 0 {
                out.push(format!("corpus `{}` must have size >= 1", c.label));
            }
            if !labels.insert(c.label.as_str()) || c.label == "probe" {
                out.push(format!("corpus label `{}` is reserved or repeated", c.label));
            }
            out.extend(c.input.validate().into_iter().map(|p| format!("corpus `{}`: {p}", c.label)));
        }
        out.extend(self.predictor.validate());
        out.dedup();
        out
    }
}

/// Parses the config at `path` and returns its diagnostics. Unreadable or
/// unparsable files are errors rather than diagnostics.
pub fn validate_config(path: &Path) -> Result<Vec<String>> {
    Ok(PipelineConfig::load(path)?.diagnostics())
}
