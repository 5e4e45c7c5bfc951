//! Activation-sparsity measurement and threshold sweeps.
//!
//! Sparsity is the fraction of entries of `x_1` that are exactly zero. No
//! epsilon is involved: thresholded activations produce exact zeros.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::error::{Error, Result};
use crate::gated_ffn::ToyModel;
use crate::numerics::Real;

/// Fraction of entries exactly equal to zero.
pub fn sparsity_of<T: Real>(x: &[T]) -> f64 {
    assert!(!x.is_empty(), "sparsity of an empty vector is undefined");
    zero_count(x) as f64 / x.len() as f64
}

fn zero_count<T: Real>(x: &[T]) -> u64 {
    x.iter().filter(|v| **v == T::zero()).count() as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub per_layer: Vec<f64>,
    pub average: f64,
    pub sample_count: usize,
    #[serde(default)]
    pub step_index: Option<u64>,
    #[serde(default)]
    pub corpus_label: Option<String>,
}

impl SparsityReport {
    pub fn with_step(mut self, step: u64) -> Self {
        self.step_index = Some(step);
        self
    }
}

/// Per-layer sparsity of `x_1` averaged over `corpus`, and the mean over layers.
///
/// Inputs are evaluated in parallel; aggregation sums integer zero counts so
/// the result does not depend on scheduling.
pub fn measure<T: Real>(model: &ToyModel<T>, corpus: &[Vec<T>], label: &str) -> Result<SparsityReport> {
    if corpus.is_empty() {
        return Err(Error::InvalidInput("cannot measure sparsity on an empty corpus".into()));
    }
    let k = model.num_layers();
    let counts = corpus
        .par_iter()
        .map(|x| {
            let trace = model.forward(x)?;
            Ok::<_, Error>(trace.layers.iter().map(|l| zero_count(&l.hidden)).collect::<Vec<u64>>())
        })
        .try_reduce(
            || vec![0u64; k],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;
    let n = corpus.len();
    let per_layer: Vec<f64> = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| c as f64 / (n * model.d_ff(i)) as f64)
        .collect();
    let average = per_layer.iter().sum::<f64>() / k as f64;
    Ok(SparsityReport {
        per_layer,
        average,
        sample_count: n,
        step_index: None,
        corpus_label: Some(label.to_string()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub sparsity: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSweepResult {
    /// ReLU (threshold -> 0) reference.
    pub baseline_sparsity: f64,
    pub baseline_loss: f64,
    pub points: Vec<SweepPoint>,
    /// Largest candidate within `tolerance` relative loss of the baseline.
    pub chosen: Option<f64>,
    pub tolerance: f64,
}

impl ThresholdSweepResult {
    pub fn chosen_activation(&self) -> ActivationKind {
        self.chosen
            .map(|t| ActivationKind::FatRelu { threshold: t })
            .unwrap_or(ActivationKind::Relu)
    }
}

/// Evaluates FATReLU at each candidate threshold on a ReLU model.
pub fn threshold_sweep<F>(
    model: &ToyModel<f64>,
    candidates: &[f64],
    probe: &[Vec<f64>],
    val_loss: F,
    tolerance: f64,
) -> Result<ThresholdSweepResult>
where
    F: Fn(&ToyModel<f64>) -> Result<f64>,
{
    if candidates.is_empty() {
        return Err(Error::InvalidInput("threshold sweep needs at least one candidate".into()));
    }
    if candidates.iter().any(|&t| !(t > 0.0)) || candidates.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput(
            "threshold candidates must be positive and sorted ascending".into(),
        ));
    }
    if let Some(l) = model
        .layers()
        .iter()
        .find(|l| !l.activation.is_kernel_supported())
    {
        return Err(Error::InvalidInput(format!(
            "threshold sweep needs a ReLU-family model, found {}",
            l.activation
        )));
    }
    let base = model.with_activation(ActivationKind::Relu);
    let baseline_sparsity = measure(&base, probe, "sweep")?.average;
    let baseline_loss = val_loss(&base)?;
    let mut points = Vec::with_capacity(candidates.len());
    for &threshold in candidates {
        let shifted = model.with_activation(ActivationKind::fatrelu(threshold)?);
        points.push(SweepPoint {
            threshold,
            sparsity: measure(&shifted, probe, "sweep")?.average,
            val_loss: val_loss(&shifted)?,
        });
    }
    let limit = baseline_loss * (1.0 + tolerance);
    let chosen = points
        .iter()
        .filter(|p| p.val_loss <= limit)
        .map(|p| p.threshold)
        .next_back();
    Ok(ThresholdSweepResult {
        baseline_sparsity,
        baseline_loss,
        points,
        chosen,
        tolerance,
    })
}

/// Per-layer series ready for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSeries {
    pub label: String,
    pub points: Vec<(usize, f64)>,
}

pub fn layerwise_report(report: &SparsityReport, tag: &str) -> LayerSeries {
    LayerSeries {
        label: tag.to_string(),
        points: report.per_layer.iter().copied().enumerate().collect(),
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    corpus: &'a str,
    step: String,
    layer: usize,
    sparsity: f64,
}

/// CSV with columns `corpus, step, layer, sparsity`.
pub fn write_reports_csv(path: &Path, reports: &[SparsityReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in reports {
        for (layer, &sparsity) in r.per_layer.iter().enumerate() {
            w.serialize(CsvRow {
                corpus: r.corpus_label.as_deref().unwrap_or(""),
                step: r.step_index.map(|s| s.to_string()).unwrap_or_default(),
                layer,
                sparsity,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_reports_json(path: &Path, reports: &[SparsityReport]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut f, reports)?;
    f.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    Ok(())
}
