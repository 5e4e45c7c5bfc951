//! L1 activation regularization and the step schedules that drive training.
//!
//! [`RegularizationSchedule`] is the staged factor schedule: a constant
//! warmup stage at `λ_1` for steps `1..=T_1`, then for every later stage `i`
//! the factor rises from `λ_{i-1}` to `λ_i` along a half sine period,
//!
//! ```text
//! η = ½ [sin(-π/2 + π (t - T_{i-1}) / (T_i - T_{i-1})) + 1]
//! λ = λ_{i-1} + η (λ_i - λ_{i-1})
//! ```
//!
//! Steps are 1-based.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gated_ffn::ForwardTrace;
use crate::numerics::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub peak_lambda: f64,
    pub end_step: u64,
}

/// Validated staged factor schedule.
///
/// JSON form: `{"stages": [{"peak_lambda": 5e-3, "end_step": 6000}, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule")]
pub struct RegularizationSchedule {
    stages: Vec<Stage>,
}

#[derive(Deserialize)]
struct RawSchedule {
    stages: Vec<Stage>,
}

impl TryFrom<RawSchedule> for RegularizationSchedule {
    type Error = Error;

    fn try_from(raw: RawSchedule) -> Result<Self> {
        Self::new(raw.stages)
    }
}

impl RegularizationSchedule {
    pub fn new(stages: Vec<Stage>) -> Result<Self> {
        let problems = Self::check(&stages);
        if problems.is_empty() {
            Ok(Self { stages })
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Every violated precondition, each naming the constraint it breaks.
    pub fn check(stages: &[Stage]) -> Vec<String> {
        let mut out = Vec::new();
        let Some(first) = stages.first() else {
            out.push("schedule needs at least one stage".to_string());
            return out;
        };
        if !(first.peak_lambda > 0.0) || !first.peak_lambda.is_finite() {
            out.push(format!(
                "first peak_lambda must be positive (0 < lambda_1), got {}",
                first.peak_lambda
            ));
        }
        if first.end_step == 0 {
            out.push("first end_step must be positive (0 < T_1)".to_string());
        }
        for (i, pair) in stages.windows(2).enumerate() {
            let (prev, cur) = (pair[0], pair[1]);
            if !(cur.peak_lambda >= prev.peak_lambda) || !cur.peak_lambda.is_finite() {
                out.push(format!(
                    "peak lambdas must be non-decreasing: stage {} has {} < stage {} value {}",
                    i + 2,
                    cur.peak_lambda,
                    i + 1,
                    prev.peak_lambda
                ));
            }
            if cur.end_step <= prev.end_step {
                out.push(format!(
                    "end steps must be strictly increasing: stage {} end_step {} <= stage {} end_step {}",
                    i + 2,
                    cur.end_step,
                    i + 1,
                    prev.end_step
                ));
            }
        }
        out
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    /// `T_S`.
    pub fn end_step(&self) -> u64 {
        self.stages.last().map_or(0, |s| s.end_step)
    }

    /// 1-based stage index containing step `t` (`1..=S`).
    pub fn stage_of(&self, t: u64) -> Result<usize> {
        self.check_step(t)?;
        Ok(self.stages.iter().position(|s| t <= s.end_step).unwrap() + 1)
    }

    fn check_step(&self, t: u64) -> Result<()> {
        if t == 0 || t > self.end_step() {
            return Err(Error::InvalidInput(format!(
                "step {t} outside schedule range 1..={}",
                self.end_step()
            )));
        }
        Ok(())
    }

    pub fn lambda_at(&self, t: u64) -> Result<f64> {
        let stage = self.stage_of(t)?;
        if stage == 1 {
            return Ok(self.stages[0].peak_lambda);
        }
        let prev = self.stages[stage - 2];
        let cur = self.stages[stage - 1];
        let progress = (t - prev.end_step) as f64 / (cur.end_step - prev.end_step) as f64;
        let eta = 0.5 * ((-PI / 2.0 + progress * PI).sin() + 1.0);
        Ok(prev.peak_lambda + eta * (cur.peak_lambda - prev.peak_lambda))
    }

    /// Mean factor over the final stage's steps (the whole schedule when
    /// there is a single stage).
    pub fn final_stage_mean(&self) -> f64 {
        let start = if self.stages.len() >= 2 {
            self.stages[self.stages.len() - 2].end_step + 1
        } else {
            1
        };
        let end = self.end_step();
        // Offsets from the first value keep a constant stage exact.
        let base = self.lambda_at(start).unwrap();
        let sum: f64 = (start..=end).map(|t| self.lambda_at(t).unwrap() - base).sum();
        base + sum / (end - start + 1) as f64
    }
}

/// Per-layer `lambda * ||x_1||_1` and their sum.
pub fn l1_loss<T: Real>(trace: &ForwardTrace<T>, lambda: f64) -> (f64, Vec<f64>) {
    let per_layer: Vec<f64> = trace
        .layers
        .iter()
        .map(|l| lambda * l.hidden.iter().map(|h| h.as_f64().abs()).sum::<f64>())
        .collect();
    (per_layer.iter().sum(), per_layer)
}

/// Unscaled `sum_layers ||x_1||_1`.
pub fn l1_norm<T: Real>(trace: &ForwardTrace<T>) -> f64 {
    trace
        .layers
        .iter()
        .map(|l| l.hidden.iter().map(|h| h.as_f64().abs()).sum::<f64>())
        .sum()
}

/// Linear warmup to `peak_lr`, then cosine annealing to zero at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub peak_lr: f64,
    pub total_steps: u64,
    pub warmup_steps: u64,
}

impl LrSchedule {
    pub fn new(peak_lr: f64, total_steps: u64, warmup_steps: u64) -> Result<Self> {
        if !(peak_lr > 0.0) || !peak_lr.is_finite() {
            return Err(Error::Config(format!("peak_lr must be positive, got {peak_lr}")));
        }
        if warmup_steps >= total_steps {
            return Err(Error::Config(format!(
                "warmup_steps ({warmup_steps}) must be < total_steps ({total_steps})"
            )));
        }
        Ok(Self {
            peak_lr,
            total_steps,
            warmup_steps,
        })
    }

    /// Default warmup of 1% of the total.
    pub fn with_default_warmup(peak_lr: f64, total_steps: u64) -> Result<Self> {
        Self::new(peak_lr, total_steps, total_steps / 100)
    }

    pub fn lr_at(&self, t: u64) -> Result<f64> {
        if t > self.total_steps {
            return Err(Error::InvalidInput(format!(
                "step {t} outside lr schedule range 0..={}",
                self.total_steps
            )));
        }
        if t < self.warmup_steps {
            return Ok(self.peak_lr * t as f64 / self.warmup_steps as f64);
        }
        let progress =
            (t - self.warmup_steps) as f64 / (self.total_steps - self.warmup_steps) as f64;
        Ok(self.peak_lr * 0.5 * (1.0 + (PI * progress).cos()))
    }
}
