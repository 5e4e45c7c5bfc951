//! Per-layer activation predictors: small two-layer networks that guess
//! which entries of `x_1` are nonzero from the layer input.
//!
//! Recall and predicted sparsity are computed per eval pair and averaged.
//! Pairs with no truly active element do not contribute to recall; if no
//! eval pair has one, recall is reported as 1.0 (nothing was missed).

use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gated_ffn::{GatedFfnLayer, ToyModel};
use crate::numerics::{DenseMatrix, SeededRng};
use crate::optim::{OptimizerConfig, Sgd};

/// Fraction of pairs held out for evaluation.
pub const EVAL_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorDataset {
    pub layer_index: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub inputs: Vec<Vec<f64>>,
    pub masks: Vec<Vec<bool>>,
    train: Vec<usize>,
    eval: Vec<usize>,
}

impl PredictorDataset {
    /// Builds a dataset from raw pairs, splitting 95/5 by a seeded shuffle.
    pub fn from_pairs(
        layer_index: usize,
        inputs: Vec<Vec<f64>>,
        masks: Vec<Vec<bool>>,
        split_seed: u64,
    ) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != masks.len() {
            return Err(Error::InvalidInput(format!(
                "need matching non-empty inputs and masks, got {} and {}",
                inputs.len(),
                masks.len()
            )));
        }
        let d_model = inputs[0].len();
        let d_ff = masks[0].len();
        if d_model == 0 || d_ff == 0 {
            return Err(Error::InvalidInput("empty input or mask vectors".into()));
        }
        if let Some(x) = inputs.iter().find(|x| x.len() != d_model) {
            return Err(Error::shape("PredictorDataset input", d_model, x.len()));
        }
        if let Some(m) = masks.iter().find(|m| m.len() != d_ff) {
            return Err(Error::shape("PredictorDataset mask", d_ff, m.len()));
        }
        let n = inputs.len();
        let mut order: Vec<usize> = (0..n).collect();
        SeededRng::new(split_seed).shuffle(&mut order);
        let n_eval = ((n as f64 * EVAL_FRACTION).ceil() as usize).clamp(1, n);
        let mut eval = order[..n_eval].to_vec();
        let mut train = order[n_eval..].to_vec();
        eval.sort_unstable();
        train.sort_unstable();
        Ok(Self {
            layer_index,
            d_model,
            d_ff,
            inputs,
            masks,
            train,
            eval,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train
    }

    pub fn eval_indices(&self) -> &[usize] {
        &self.eval
    }

    /// Mean fraction of inactive elements over the eval split.
    pub fn eval_sparsity(&self) -> f64 {
        let total: usize = self
            .eval
            .iter()
            .map(|&i| self.masks[i].iter().filter(|&&m| !m).count())
            .sum();
        total as f64 / (self.eval.len() * self.d_ff) as f64
    }
}

/// Runs `model` over `corpus` and records `(input to layer, x_1 != 0)` for
/// the first `count` inputs. A short corpus yields a smaller dataset and a
/// warning.
pub fn collect_pairs(
    model: &ToyModel<f64>,
    corpus: &[Vec<f64>],
    layer_index: usize,
    count: usize,
    split_seed: u64,
) -> Result<PredictorDataset> {
    if layer_index >= model.num_layers() {
        return Err(Error::InvalidInput(format!(
            "layer {layer_index} out of range for a {}-layer model",
            model.num_layers()
        )));
    }
    if corpus.len() < count {
        warn!(
            "corpus exhausted: collected {} of {count} pairs for layer {layer_index}",
            corpus.len()
        );
    }
    let take = corpus.len().min(count);
    let mut inputs = Vec::with_capacity(take);
    let mut masks = Vec::with_capacity(take);
    for x in &corpus[..take] {
        let mut trace = model.forward(x)?;
        let layer = trace.layers.swap_remove(layer_index);
        masks.push(layer.hidden.iter().map(|&v| v != 0.0).collect());
        inputs.push(layer.input);
    }
    PredictorDataset::from_pairs(layer_index, inputs, masks, split_seed)
}

/// Anything that produces an activation mask for a layer input.
pub trait MaskPredictor {
    fn d_ff(&self) -> usize;
    fn predict_mask(&self, x: &[f64]) -> Result<Vec<bool>>;
}

/// Reads the mask off the true layer: the best any predictor can do.
pub struct OraclePredictor<'a> {
    pub layer: &'a GatedFfnLayer<f64>,
}

impl MaskPredictor for OraclePredictor<'_> {
    fn d_ff(&self) -> usize {
        self.layer.d_ff()
    }

    fn predict_mask(&self, x: &[f64]) -> Result<Vec<bool>> {
        Ok(self.layer.hidden(x)?.iter().map(|&v| v != 0.0).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationPredictor {
    pub layer_index: usize,
    pub w1: DenseMatrix<f64>,
    pub b1: Vec<f64>,
    pub w2: DenseMatrix<f64>,
    pub b2: Vec<f64>,
    pub tau: f64,
}

impl ActivationPredictor {
    pub fn init(layer_index: usize, d_model: usize, hidden_dim: usize, d_ff: usize, tau: f64, rng: &mut SeededRng) -> Self {
        let s1 = 1.0 / (d_model as f64).sqrt();
        let s2 = 1.0 / (hidden_dim as f64).sqrt();
        let w1 = DenseMatrix::from_fn(hidden_dim, d_model, |_, _| rng.uniform(-s1, s1));
        let w2 = DenseMatrix::from_fn(d_ff, hidden_dim, |_, _| rng.uniform(-s2, s2));
        Self {
            layer_index,
            w1,
            b1: vec![0.0; hidden_dim],
            w2,
            b2: vec![0.0; d_ff],
            tau,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    /// Hidden activations and output logits.
    fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut h = self.w1.matvec(x)?;
        for (v, b) in h.iter_mut().zip(&self.b1) {
            *v = (*v + b).max(0.0);
        }
        let mut logits = self.w2.matvec(&h)?;
        for (v, b) in logits.iter_mut().zip(&self.b2) {
            *v += b;
        }
        Ok((h, logits))
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.1.into_iter().map(sigmoid).collect())
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(self.w1.as_slice());
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(self.w2.as_slice());
        out.extend_from_slice(&self.b2);
        out
    }

    fn set_flat(&mut self, flat: &[f64]) {
        let mut rest = flat;
        for dst in [
            self.w1.as_mut_slice(),
            &mut self.b1[..],
            self.w2.as_mut_slice(),
            &mut self.b2[..],
        ] {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        }
    }

    pub fn param_count(&self) -> usize {
        self.w1.as_slice().len() + self.b1.len() + self.w2.as_slice().len() + self.b2.len()
    }
}

impl MaskPredictor for ActivationPredictor {
    fn d_ff(&self) -> usize {
        self.w2.rows()
    }

    fn predict_mask(&self, x: &[f64]) -> Result<Vec<bool>> {
        Ok(self.probabilities(x)?.into_iter().map(|p| p >= self.tau).collect())
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `log(1 + e^z)`.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    /// Defaults to `d_ff / 4`.
    #[serde(default)]
    pub hidden_dim: Option<usize>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_epochs() -> usize {
    10
}
fn default_lr() -> f64 {
    0.05
}
fn default_batch() -> usize {
    64
}
fn default_tau() -> f64 {
    0.5
}
fn default_pairs() -> usize {
    50_000
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            hidden_dim: None,
            epochs: default_epochs(),
            lr: default_lr(),
            batch_size: default_batch(),
            tau: default_tau(),
            pairs: default_pairs(),
            optimizer: OptimizerConfig::default(),
            seed: 0,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut out = self.optimizer.validate();
        if self.hidden_dim == Some(0) {
            out.push("predictor.hidden_dim must be >= 1".into());
        }
        if self.batch_size == 0 {
            out.push("predictor.batch_size must be >= 1".into());
        }
        if !(self.lr > 0.0) {
            out.push(format!("predictor.lr must be positive, got {}", self.lr));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            out.push(format!("predictor.tau must be in [0, 1], got {}", self.tau));
        }
        if self.pairs == 0 {
            out.push("predictor.pairs must be >= 1".into());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorMetrics {
    pub layer: usize,
    pub recall: f64,
    pub predicted_sparsity: f64,
    pub eval_pairs: usize,
}

pub fn write_metrics_csv(path: &Path, metrics: &[PredictorMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["layer", "recall", "predicted_sparsity"])?;
    for m in metrics {
        w.write_record([m.layer.to_string(), m.recall.to_string(), m.predicted_sparsity.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Recall and predicted sparsity over the eval split.
pub fn evaluate_predictor(p: &impl MaskPredictor, ds: &PredictorDataset) -> Result<PredictorMetrics> {
    if ds.eval.is_empty() {
        return Err(Error::InvalidInput("eval split is empty".into()));
    }
    if p.d_ff() != ds.d_ff {
        return Err(Error::shape("evaluate_predictor", ds.d_ff, p.d_ff()));
    }
    let (mut recall_sum, mut recall_n, mut sparsity_sum) = (0.0, 0usize, 0.0);
    for &i in &ds.eval {
        let pred = p.predict_mask(&ds.inputs[i])?;
        let truth = &ds.masks[i];
        let active_true = truth.iter().filter(|&&t| t).count();
        let active_pred = pred.iter().filter(|&&q| q).count();
        let hit = pred.iter().zip(truth).filter(|(&q, &t)| q && t).count();
        if active_true > 0 {
            recall_sum += hit as f64 / active_true as f64;
            recall_n += 1;
        }
        sparsity_sum += 1.0 - active_pred as f64 / ds.d_ff as f64;
    }
    Ok(PredictorMetrics {
        layer: ds.layer_index,
        recall: if recall_n == 0 { 1.0 } else { recall_sum / recall_n as f64 },
        predicted_sparsity: sparsity_sum / ds.eval.len() as f64,
        eval_pairs: ds.eval.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub recall: f64,
    pub predicted_sparsity: f64,
}

/// Mini-batch SGD on binary cross-entropy. Returns the snapshot with the
/// best eval recall (the untrained init counts as epoch 0).
pub fn train_predictor(ds: &PredictorDataset, cfg: &PredictorConfig) -> Result<(ActivationPredictor, Vec<EpochLog>)> {
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    if ds.train.is_empty() {
        return Err(Error::InvalidInput("train split is empty".into()));
    }
    let hidden_dim = cfg.hidden_dim.unwrap_or((ds.d_ff / 4).max(1));
    let mut rng = SeededRng::new(cfg.seed).fork(ds.layer_index as u64);
    let mut p = ActivationPredictor::init(ds.layer_index, ds.d_model, hidden_dim, ds.d_ff, cfg.tau, &mut rng);
    let mut opt = Sgd::new(cfg.optimizer, p.param_count());

    let m0 = evaluate_predictor(&p, ds)?;
    let mut log = vec![EpochLog {
        epoch: 0,
        train_loss: f64::NAN,
        recall: m0.recall,
        predicted_sparsity: m0.predicted_sparsity,
    }];
    let mut best = (m0.recall, p.clone());

    let mut order = ds.train.clone();
    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads) = batch_gradient(&p, ds, batch)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "predictor for layer {} hit non-finite loss in epoch {epoch}",
                    ds.layer_index
                )));
            }
            loss_sum += loss * batch.len() as f64;
            let mut flat = p.to_flat();
            opt.step(&mut flat, &grads, cfg.lr)?;
            p.set_flat(&flat);
        }
        let m = evaluate_predictor(&p, ds)?;
        log.push(EpochLog {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            recall: m.recall,
            predicted_sparsity: m.predicted_sparsity,
        });
        if m.recall > best.0 {
            best = (m.recall, p.clone());
        }
    }
    Ok((best.1, log))
}

/// Mean BCE over the batch and its gradient in flat layout.
fn batch_gradient(p: &ActivationPredictor, ds: &PredictorDataset, batch: &[usize]) -> Result<(f64, Vec<f64>)> {
    let (h_dim, d_model, d_ff) = (p.hidden_dim(), ds.d_model, ds.d_ff);
    let mut gw1 = DenseMatrix::<f64>::zeros(h_dim, d_model);
    let mut gb1 = vec![0.0; h_dim];
    let mut gw2 = DenseMatrix::<f64>::zeros(d_ff, h_dim);
    let mut gb2 = vec![0.0; d_ff];
    let scale = 1.0 / (batch.len() * d_ff) as f64;
    let mut loss = 0.0;
    for &i in batch {
        let x = &ds.inputs[i];
        let (h, logits) = p.forward(x)?;
        let dl: Vec<f64> = logits
            .iter()
            .zip(&ds.masks[i])
            .map(|(&z, &y)| {
                let y = if y { 1.0 } else { 0.0 };
                loss += softplus(z) - y * z;
                (sigmoid(z) - y) * scale
            })
            .collect();
        gw2.add_outer(&dl, &h);
        for (g, d) in gb2.iter_mut().zip(&dl) {
            *g += d;
        }
        let mut dh = p.w2.matvec_transposed(&dl)?;
        for (d, &hv) in dh.iter_mut().zip(&h) {
            if hv <= 0.0 {
                *d = 0.0;
            }
        }
        gw1.add_outer(&dh, x);
        for (g, d) in gb1.iter_mut().zip(&dh) {
            *g += d;
        }
    }
    let mut flat = gw1.into_vec();
    flat.extend(gb1);
    flat.extend(gw2.into_vec());
    flat.extend(gb2);
    Ok((loss * scale, flat))
}
