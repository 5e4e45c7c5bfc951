//! Teacher-student regression task.
//!
//! Targets come from a frozen, randomly initialised Swish teacher with the
//! student's architecture; the task loss is the mean squared error over
//! output dimensions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::error::Result;
use crate::gated_ffn::{init_model, ModelConfig, ToyModel};
use crate::numerics::SeededRng;

/// Input distribution for training, validation and probe corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputDistribution {
    /// `N(0, std² I)`.
    Gaussian { std: f64 },
    /// Equal-weight mixture of `centers` Gaussian blobs with standard
    /// deviation `spread` around `N(0, I)` centres drawn from `center_seed`.
    Clustered {
        centers: usize,
        spread: f64,
        #[serde(default)]
        center_seed: u64,
    },
}

impl Default for InputDistribution {
    fn default() -> Self {
        Self::Gaussian { std: 1.0 }
    }
}

impl InputDistribution {
    pub fn validate(&self) -> Vec<String> {
        match *self {
            Self::Gaussian { std } if !(std > 0.0) => vec![format!("gaussian std must be positive, got {std}")],
            Self::Clustered { centers, spread, .. } if centers == 0 || !(spread >= 0.0) => {
                vec!["clustered input needs centers >= 1 and spread >= 0".to_string()]
            }
            _ => Vec::new(),
        }
    }

    /// Draws `n` vectors of length `d_model`.
    pub fn sample(&self, d_model: usize, n: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
        match *self {
            Self::Gaussian { std } => (0..n)
                .map(|_| (0..d_model).map(|_| std * rng.normal()).collect())
                .collect(),
            Self::Clustered {
                centers,
                spread,
                center_seed,
            } => {
                let mut crng = SeededRng::new(center_seed);
                let mus: Vec<Vec<f64>> = (0..centers)
                    .map(|_| (0..d_model).map(|_| crng.normal()).collect())
                    .collect();
                (0..n)
                    .map(|_| {
                        let mu = &mus[rng.below(centers)];
                        mu.iter().map(|m| m + spread * rng.normal()).collect()
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub teacher_seed: u64,
    #[serde(default = "default_teacher_scale")]
    pub teacher_init_scale: f64,
    #[serde(default)]
    pub input: InputDistribution,
    #[serde(default = "default_val_size")]
    pub val_size: usize,
    #[serde(default = "default_probe_size")]
    pub probe_size: usize,
    /// Seed of the held-out validation and probe corpora.
    #[serde(default = "default_data_seed")]
    pub data_seed: u64,
}

fn default_teacher_scale() -> f64 {
    1.0
}

fn default_val_size() -> usize {
    512
}

fn default_probe_size() -> usize {
    256
}

fn default_data_seed() -> u64 {
    0x5EED
}

impl TaskConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut out = self.input.validate();
        if self.val_size == 0 || self.probe_size == 0 {
            out.push("task.val_size and task.probe_size must be >= 1".to_string());
        }
        if !(self.teacher_init_scale > 0.0) {
            out.push("task.teacher_init_scale must be positive".to_string());
        }
        out
    }
}

/// Inputs and their targets.
pub type Batch = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Materialised task: teacher plus fixed validation and probe corpora.
#[derive(Debug, Clone)]
pub struct Task {
    pub teacher: ToyModel<f64>,
    pub input: InputDistribution,
    pub d_model: usize,
    pub val_inputs: Vec<Vec<f64>>,
    pub val_targets: Vec<Vec<f64>>,
    pub probe: Vec<Vec<f64>>,
}

impl Task {
    pub fn build(model: &ModelConfig, cfg: &TaskConfig) -> Result<Self> {
        let teacher_cfg = ModelConfig {
            activation: ActivationKind::Swish,
            init_scale: cfg.teacher_init_scale,
            seed: cfg.teacher_seed,
            ..model.clone()
        };
        let teacher = init_model(&teacher_cfg, &mut SeededRng::new(cfg.teacher_seed))?;
        let data = SeededRng::new(cfg.data_seed);
        let val_inputs = cfg.input.sample(model.d_model, cfg.val_size, &mut data.fork(1));
        let probe = cfg.input.sample(model.d_model, cfg.probe_size, &mut data.fork(2));
        let val_targets = targets(&teacher, &val_inputs)?;
        Ok(Self {
            teacher,
            input: cfg.input.clone(),
            d_model: model.d_model,
            val_inputs,
            val_targets,
            probe,
        })
    }

    pub fn sample_batch(&self, n: usize, rng: &mut SeededRng) -> Result<Batch> {
        let xs = self.input.sample(self.d_model, n, rng);
        let ys = targets(&self.teacher, &xs)?;
        Ok((xs, ys))
    }

    /// Mean squared error on the validation corpus.
    pub fn val_loss(&self, model: &ToyModel<f64>) -> Result<f64> {
        mse(model, &self.val_inputs, &self.val_targets)
    }
}

fn targets(teacher: &ToyModel<f64>, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    xs.par_iter().map(|x| teacher.predict(x)).collect()
}

/// Mean over samples of the per-sample mean squared error.
pub fn mse(model: &ToyModel<f64>, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<f64> {
    let per: Vec<f64> = xs
        .par_iter()
        .zip(ys)
        .map(|(x, y)| {
            let out = model.predict(x)?;
            Ok(sq_err(&out, y))
        })
        .collect::<Result<_>>()?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

pub(crate) fn sq_err(out: &[f64], y: &[f64]) -> f64 {
    out.iter().zip(y).map(|(o, t)| (o - t) * (o - t)).sum::<f64>() / out.len() as f64
}
