//! SGD with momentum over flat parameter vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    /// Global gradient-norm clip; off when absent.
    #[serde(default)]
    pub grad_clip: Option<f64>,
}

fn default_momentum() -> f64 {
    0.9
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            momentum: default_momentum(),
            weight_decay: 0.0,
            grad_clip: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(0.0..1.0).contains(&self.momentum) {
            out.push(format!("optimizer.momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0) {
            out.push(format!("optimizer.weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                out.push(format!("optimizer.grad_clip must be positive, got {c}"));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Sgd {
    cfg: OptimizerConfig,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(cfg: OptimizerConfig, num_params: usize) -> Self {
        Self {
            cfg,
            velocity: vec![0.0; num_params],
        }
    }

    /// `v <- mu v + g + wd w;  w <- w - lr v`, after optional norm clipping.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.velocity.len() || grads.len() != params.len() {
            return Err(Error::shape("Sgd::step", self.velocity.len(), grads.len()));
        }
        let clip = match self.cfg.grad_clip {
            Some(max) => {
                let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let (mu, wd) = (self.cfg.momentum, self.cfg.weight_decay);
        for ((w, v), &g) in params.iter_mut().zip(&mut self.velocity).zip(grads) {
            *v = mu * *v + clip * g + wd * *w;
            *w -= lr * *v;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_sgd_step() {
        let mut opt = Sgd::new(OptimizerConfig { momentum: 0.0, ..Default::default() }, 2);
        let mut w = vec![1.0, -1.0];
        opt.step(&mut w, &[0.5, -0.5], 0.1).unwrap();
        assert_eq!(w, vec![0.95, -0.95]);
    }

    #[test]
    fn momentum_accumulates() {
        let mut opt = Sgd::new(OptimizerConfig::default(), 1);
        let mut w = vec![0.0];
        opt.step(&mut w, &[1.0], 1.0).unwrap();
        opt.step(&mut w, &[1.0], 1.0).unwrap();
        assert!((w[0] + 1.0 + 1.9).abs() < 1e-15);
    }

    #[test]
    fn clipping_bounds_the_update() {
        let cfg = OptimizerConfig { momentum: 0.0, weight_decay: 0.0, grad_clip: Some(1.0) };
        let mut opt = Sgd::new(cfg, 2);
        let mut w = vec![0.0, 0.0];
        opt.step(&mut w, &[3.0, 4.0], 1.0).unwrap();
        assert!((w[0] + 0.6).abs() < 1e-15 && (w[1] + 0.8).abs() < 1e-15);
    }

    #[test]
    fn quadratic_converges() {
        let mut opt = Sgd::new(OptimizerConfig::default(), 1);
        let mut w = vec![5.0];
        for _ in 0..500 {
            let g = vec![2.0 * w[0]];
            opt.step(&mut w, &g, 0.01).unwrap();
        }
        assert!(w[0].abs() < 1e-3);
    }
}
