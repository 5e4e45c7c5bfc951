//! Wall-clock comparison of the sparse steps against their dense baselines.

use std::hint::black_box;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{step2_into, step3_into, ColumnMajorWeights, SparseActivationVector};
use crate::activations::ActivationKind;
use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub d_model: usize,
    pub d_ff: usize,
    pub sparsity: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_kernel_activation")]
    pub activation: ActivationKind,
}

fn default_trials() -> usize {
    200
}

fn default_warmup() -> usize {
    10
}

fn default_kernel_activation() -> ActivationKind {
    ActivationKind::Relu
}

impl BenchConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.d_model == 0 || self.d_ff == 0 {
            out.push("bench.d_model and bench.d_ff must be >= 1".to_string());
        }
        if self.sparsity.is_empty() {
            out.push("bench.sparsity needs at least one level".to_string());
        }
        for &s in &self.sparsity {
            if !(0.0..1.0).contains(&s) {
                out.push(format!("bench sparsity level {s} outside [0, 1)"));
            }
        }
        if self.trials == 0 {
            out.push("bench.trials must be >= 1".to_string());
        }
        if !self.activation.is_kernel_supported() {
            out.push(format!(
                "unsupported activation for sparse kernels: {}",
                self.activation
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineInfo {
    pub arch: String,
    pub os: String,
    pub logical_cpus: usize,
    pub threads: usize,
    pub optimized: bool,
}

impl MachineInfo {
    pub fn current() -> Self {
        Self {
            arch: std::env::consts::ARCH.to_string(),
            os: std::env::consts::OS.to_string(),
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            threads: 1,
            optimized: !cfg!(debug_assertions),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    /// `step2`, `step3`, or their `_dense` baselines.
    pub step: String,
    pub sparsity: f64,
    pub median_us: f64,
    pub min_us: f64,
    pub p90_us: f64,
    pub speedup_vs_dense: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub machine: MachineInfo,
    pub d_model: usize,
    pub d_ff: usize,
    pub trials: usize,
    pub warmup: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn row(&self, step: &str, sparsity: f64) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.step == step && r.sparsity == sparsity)
    }

    /// CSV with `#`-prefixed machine header lines.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let m = &self.machine;
        writeln!(
            file,
            "# arch={} os={} logical_cpus={} threads={} optimized={} d_model={} d_ff={} trials={} warmup={}",
            m.arch, m.os, m.logical_cpus, m.threads, m.optimized, self.d_model, self.d_ff, self.trials, self.warmup
        )
        .map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Synthetic operands for one sparsity level.
pub struct BenchFixture {
    pub w_up: DenseMatrix<f32>,
    pub w_up_t: ColumnMajorWeights<f32>,
    pub w_down: DenseMatrix<f32>,
    pub w_down_cm: ColumnMajorWeights<f32>,
    pub x: Vec<f32>,
    pub z: Vec<f32>,
}

impl BenchFixture {
    pub fn weights(d_model: usize, d_ff: usize, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed).fork(0);
        let scale = 1.0 / (d_model as f64).sqrt();
        let w_up = DenseMatrix::from_fn(d_ff, d_model, |_, _| rng.uniform(-scale, scale) as f32);
        let w_down = DenseMatrix::from_fn(d_model, d_ff, |_, _| rng.uniform(-scale, scale) as f32);
        let x = (0..d_model).map(|_| rng.normal() as f32).collect();
        Self {
            w_up_t: ColumnMajorWeights::of_transpose(&w_up),
            w_down_cm: ColumnMajorWeights::from_row_major(&w_down),
            w_up,
            w_down,
            x,
            z: vec![0.0; d_ff],
        }
    }

    /// Sets `z` so exactly `ceil(level * d_ff)` gates are closed, at seeded
    /// random positions.
    pub fn set_sparsity(&mut self, level: f64, threshold: f64, seed: u64) {
        self.z = gate_pattern(self.z.len(), level, threshold, seed);
    }
}

/// Gate vector with exactly `ceil(level * d_ff)` entries below `threshold`.
pub fn gate_pattern(d_ff: usize, level: f64, threshold: f64, seed: u64) -> Vec<f32> {
    let mut rng = SeededRng::new(seed).fork((level * 1e6) as u64 + 1);
    let closed = ((level * d_ff as f64).ceil() as usize).min(d_ff);
    let mut order: Vec<usize> = (0..d_ff).collect();
    rng.shuffle(&mut order);
    let mut z = vec![0.0f32; d_ff];
    for (rank, &j) in order.iter().enumerate() {
        z[j] = if rank < closed {
            (threshold - rng.uniform(0.01, 1.0)) as f32
        } else {
            (threshold + rng.uniform(0.01, 1.0)) as f32
        };
    }
    z
}

#[derive(Debug, Clone, Copy)]
struct Stats {
    median: f64,
    min: f64,
    p90: f64,
}

fn time_us(trials: usize, warmup: usize, mut f: impl FnMut()) -> Stats {
    for _ in 0..warmup {
        f();
    }
    let mut samples: Vec<f64> = (0..trials)
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_secs_f64() * 1e6
        })
        .collect();
    samples.sort_by(|a, b| a.total_cmp(b));
    let at = |q: f64| samples[((samples.len() - 1) as f64 * q).round() as usize];
    Stats {
        median: at(0.5),
        min: samples[0],
        p90: at(0.9),
    }
}

/// Times steps 2 and 3 against dense baselines at each sparsity level.
pub fn bench(cfg: &BenchConfig) -> Result<BenchTable> {
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    let threshold = cfg.activation.gate_threshold().unwrap_or(0.0);
    let mut fx = BenchFixture::weights(cfg.d_model, cfg.d_ff, cfg.seed);
    let mut rows = Vec::new();
    let mut up = vec![0.0f32; cfg.d_ff];
    let mut x1_dense = vec![0.0f32; cfg.d_ff];
    let mut out = vec![0.0f32; cfg.d_model];
    let mut x1 = SparseActivationVector::with_capacity(cfg.d_ff, cfg.d_ff);
    for &level in &cfg.sparsity {
        fx.set_sparsity(level, threshold, cfg.seed);
        let act = cfg.activation;

        let dense2 = time_us(cfg.trials, cfg.warmup, || {
            fx.w_up.matvec_into(black_box(&fx.x), &mut up).unwrap();
            for j in 0..cfg.d_ff {
                x1_dense[j] = act.apply(fx.z[j]) * up[j];
            }
            black_box(&x1_dense);
        });
        let sparse2 = time_us(cfg.trials, cfg.warmup, || {
            step2_into(black_box(&fx.z), &fx.w_up_t, &fx.x, act, &mut x1, &mut ()).unwrap();
            black_box(&x1);
        });
        // x1 / x1_dense now hold this level's activations.
        let dense3 = time_us(cfg.trials, cfg.warmup, || {
            fx.w_down.matvec_into(black_box(&x1_dense), &mut out).unwrap();
            black_box(&out);
        });
        let sparse3 = time_us(cfg.trials, cfg.warmup, || {
            step3_into(black_box(&x1), &fx.w_down_cm, &mut out, &mut ()).unwrap();
            black_box(&out);
        });

        for (step, dense, sparse) in [("step2", dense2, sparse2), ("step3", dense3, sparse3)] {
            rows.push(BenchRow {
                step: step.to_string(),
                sparsity: level,
                median_us: sparse.median,
                min_us: sparse.min,
                p90_us: sparse.p90,
                speedup_vs_dense: dense.median / sparse.median,
            });
            rows.push(BenchRow {
                step: format!("{step}_dense"),
                sparsity: level,
                median_us: dense.median,
                min_us: dense.min,
                p90_us: dense.p90,
                speedup_vs_dense: 1.0,
            });
        }
    }
    Ok(BenchTable {
        machine: MachineInfo::current(),
        d_model: cfg.d_model,
        d_ff: cfg.d_ff,
        trials: cfg.trials,
        warmup: cfg.warmup,
        rows,
    })
}
