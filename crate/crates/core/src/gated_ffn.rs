//! Gated FFN blocks and the residual toy model built from them.
//!
//! One block computes
//!
//! ```text
//! z   = W_s x          (gate pre-activation)
//! s   = act(z)         (gating scores)
//! u   = W_1 x          (up projection)
//! x_1 = s ⊙ u          (intermediate output; sparsity is measured here)
//! out = W_2 x_1
//! ```
//!
//! and the model applies `x <- x + out` per block followed by a linear head.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::error::{Error, Result};
use crate::numerics::tensor_io::{self, Tensor};
use crate::numerics::{axpy, DenseMatrix, Real, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub d_ff: usize,
    pub num_layers: usize,
    pub output_dim: usize,
    #[serde(default = "default_activation")]
    pub activation: ActivationKind,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_activation() -> ActivationKind {
    ActivationKind::Swish
}

fn default_init_scale() -> f64 {
    1.0
}

impl ModelConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("num_layers", self.num_layers),
            ("output_dim", self.output_dim),
        ] {
            if v == 0 {
                out.push(format!("model.{name} must be >= 1"));
            }
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            out.push(format!("model.init_scale must be positive, got {}", self.init_scale));
        }
        out
    }
}

/// One gated FFN block.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedFfnLayer<T = f64> {
    /// `W_s`, `d_ff x d_model`.
    pub w_gate: DenseMatrix<T>,
    /// `W_1`, `d_ff x d_model`.
    pub w_up: DenseMatrix<T>,
    /// `W_2`, `d_model x d_ff`.
    pub w_down: DenseMatrix<T>,
    pub activation: ActivationKind,
}

/// Captured intermediates of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace<T = f64> {
    /// Block input `x`.
    pub input: Vec<T>,
    /// `z = W_s x`.
    pub gate_pre: Vec<T>,
    /// `s = act(z)`.
    pub gate: Vec<T>,
    /// `u = W_1 x`.
    pub up: Vec<T>,
    /// `x_1 = s ⊙ u`.
    pub hidden: Vec<T>,
}

impl<T: Real> GatedFfnLayer<T> {
    pub fn new(
        w_gate: DenseMatrix<T>,
        w_up: DenseMatrix<T>,
        w_down: DenseMatrix<T>,
        activation: ActivationKind,
    ) -> Result<Self> {
        if w_gate.shape() != w_up.shape() {
            return Err(Error::shape(
                "GatedFfnLayer::new",
                format!("W_1 shape {:?}", w_gate.shape()),
                format!("{:?}", w_up.shape()),
            ));
        }
        if w_down.shape() != (w_gate.cols(), w_gate.rows()) {
            return Err(Error::shape(
                "GatedFfnLayer::new",
                format!("W_2 shape {:?}", (w_gate.cols(), w_gate.rows())),
                format!("{:?}", w_down.shape()),
            ));
        }
        Ok(Self {
            w_gate,
            w_up,
            w_down,
            activation,
        })
    }

    pub fn d_model(&self) -> usize {
        self.w_gate.cols()
    }

    pub fn d_ff(&self) -> usize {
        self.w_gate.rows()
    }

    /// Block FFN output (without the residual) plus the captured trace.
    pub fn forward(&self, x: &[T]) -> Result<(Vec<T>, LayerTrace<T>)> {
        if x.len() != self.d_model() {
            return Err(Error::shape("forward_layer", format!("x.len = {}", self.d_model()), x.len()));
        }
        let gate_pre = self.w_gate.matvec(x)?;
        let up = self.w_up.matvec(x)?;
        let gate: Vec<T> = gate_pre.iter().map(|&z| self.activation.apply(z)).collect();
        let hidden: Vec<T> = gate.iter().zip(&up).map(|(&s, &u)| s * u).collect();
        let out = self.w_down.matvec(&hidden)?;
        Ok((
            out,
            LayerTrace {
                input: x.to_vec(),
                gate_pre,
                gate,
                up,
                hidden,
            },
        ))
    }

    /// Intermediate output `x_1` only.
    pub fn hidden(&self, x: &[T]) -> Result<Vec<T>> {
        let gate_pre = self.w_gate.matvec(x)?;
        let up = self.w_up.matvec(x)?;
        Ok(gate_pre
            .iter()
            .zip(&up)
            .map(|(&z, &u)| self.activation.apply(z) * u)
            .collect())
    }

    pub fn cast<U: Real>(&self) -> GatedFfnLayer<U> {
        GatedFfnLayer {
            w_gate: self.w_gate.cast(),
            w_up: self.w_up.cast(),
            w_down: self.w_down.cast(),
            activation: self.activation,
        }
    }
}

static NEXT_MODEL_ID: AtomicU64 = AtomicU64::new(1);

/// Identifies the exact weights a trace was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Stamp {
    id: u64,
    revision: u64,
}

impl Stamp {
    fn fresh() -> Self {
        Self {
            id: NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed),
            revision: 0,
        }
    }
}

/// Residual stack of gated FFN blocks followed by a linear head.
#[derive(Debug)]
pub struct ToyModel<T = f64> {
    layers: Vec<GatedFfnLayer<T>>,
    head: DenseMatrix<T>,
    stamp: Stamp,
}

impl<T: Clone> Clone for ToyModel<T> {
    fn clone(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            head: self.head.clone(),
            stamp: Stamp::fresh(),
        }
    }
}

/// Equality compares weights and activations only.
impl<T: PartialEq> PartialEq for ToyModel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.head == other.head
    }
}

/// Captures of a full model forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T = f64> {
    pub layers: Vec<LayerTrace<T>>,
    /// Residual stream entering the head.
    pub final_hidden: Vec<T>,
    pub output: Vec<T>,
    stamp: Stamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads<T = f64> {
    pub w_gate: DenseMatrix<T>,
    pub w_up: DenseMatrix<T>,
    pub w_down: DenseMatrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<T = f64> {
    pub layers: Vec<LayerGrads<T>>,
    pub head: DenseMatrix<T>,
}

impl<T: Real> ToyModel<T> {
    pub fn new(layers: Vec<GatedFfnLayer<T>>, head: DenseMatrix<T>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::InvalidInput("model needs at least one layer".into()))?;
        let d_model = first.d_model();
        if let Some(bad) = layers.iter().position(|l| l.d_model() != d_model) {
            return Err(Error::shape(
                "ToyModel::new",
                format!("d_model = {d_model}"),
                format!("layer {bad} d_model = {}", layers[bad].d_model()),
            ));
        }
        if head.cols() != d_model {
            return Err(Error::shape("ToyModel::new", format!("head cols = {d_model}"), head.cols()));
        }
        Ok(Self {
            layers,
            head,
            stamp: Stamp::fresh(),
        })
    }

    pub fn layers(&self) -> &[GatedFfnLayer<T>] {
        &self.layers
    }

    /// Mutable access; invalidates traces taken before the call.
    pub fn layers_mut(&mut self) -> &mut [GatedFfnLayer<T>] {
        self.stamp.revision += 1;
        &mut self.layers
    }

    pub fn head(&self) -> &DenseMatrix<T> {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut DenseMatrix<T> {
        self.stamp.revision += 1;
        &mut self.head
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn d_model(&self) -> usize {
        self.head.cols()
    }

    pub fn d_ff(&self, layer: usize) -> usize {
        self.layers[layer].d_ff()
    }

    pub fn output_dim(&self) -> usize {
        self.head.rows()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| 3 * l.d_ff() * l.d_model())
            .sum::<usize>()
            + self.head.rows() * self.head.cols()
    }

    /// Same weights, `kind` on every layer.
    pub fn with_activation(&self, kind: ActivationKind) -> Self {
        let mut m = self.clone();
        for l in &mut m.layers {
            l.activation = kind;
        }
        m
    }

    pub fn cast<U: Real>(&self) -> ToyModel<U> {
        ToyModel {
            layers: self.layers.iter().map(GatedFfnLayer::cast).collect(),
            head: self.head.cast(),
            stamp: Stamp::fresh(),
        }
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.d_model() {
            return Err(Error::shape("forward_model", format!("x.len = {}", self.d_model()), x.len()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[T]) -> Result<ForwardTrace<T>> {
        self.check_input(x)?;
        let mut h = x.to_vec();
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (out, trace) = layer.forward(&h)?;
            axpy(T::one(), &out, &mut h);
            layers.push(trace);
        }
        let output = self.head.matvec(&h)?;
        Ok(ForwardTrace {
            layers,
            final_hidden: h,
            output,
            stamp: self.stamp,
        })
    }

    /// Output only, without keeping intermediates.
    pub fn predict(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        let mut h = x.to_vec();
        for layer in &self.layers {
            let hidden = layer.hidden(&h)?;
            let out = layer.w_down.matvec(&hidden)?;
            axpy(T::one(), &out, &mut h);
        }
        self.head.matvec(&h)
    }

    /// Gradients of `loss(output) + lambda * sum_layers ||x_1||_1`, given
    /// `output_grad = dloss/doutput`. The L1 subgradient uses `sign(0) = 0`.
    pub fn backward(&self, trace: &ForwardTrace<T>, output_grad: &[T], l1_lambda: T) -> Result<ParamGrads<T>> {
        let mut grads = ParamGrads::zeros_like(self);
        self.backward_into(trace, output_grad, l1_lambda, &mut grads)?;
        Ok(grads)
    }

    /// Like [`backward`](Self::backward), but adds into `grads`.
    pub fn backward_into(
        &self,
        trace: &ForwardTrace<T>,
        output_grad: &[T],
        l1_lambda: T,
        grads: &mut ParamGrads<T>,
    ) -> Result<()> {
        if trace.stamp != self.stamp || trace.layers.len() != self.layers.len() {
            return Err(Error::InvalidInput(
                "trace was not produced by this model's current weights".into(),
            ));
        }
        if output_grad.len() != self.output_dim() {
            return Err(Error::shape("backward_model", self.output_dim(), output_grad.len()));
        }
        if grads.layers.len() != self.layers.len() {
            return Err(Error::shape("backward_model grads", self.layers.len(), grads.layers.len()));
        }
        grads.head.add_outer(output_grad, &trace.final_hidden);
        // Gradient w.r.t. the residual stream, walked from the top block down.
        let mut d_stream = self.head.matvec_transposed(output_grad)?;
        for ((layer, lt), g) in self.layers.iter().zip(&trace.layers).zip(grads.layers.iter_mut()).rev() {
            let d_ff = layer.d_ff();
            g.w_down.add_outer(&d_stream, &lt.hidden);
            let mut d_hidden = layer.w_down.matvec_transposed(&d_stream)?;
            if l1_lambda != T::zero() {
                for (g, &h) in d_hidden.iter_mut().zip(&lt.hidden) {
                    *g = *g + l1_lambda * sign(h);
                }
            }
            let mut d_pre = vec![T::zero(); d_ff];
            let mut d_up = vec![T::zero(); d_ff];
            for j in 0..d_ff {
                d_up[j] = d_hidden[j] * lt.gate[j];
                d_pre[j] = d_hidden[j] * lt.up[j] * layer.activation.derivative(lt.gate_pre[j]);
            }
            g.w_gate.add_outer(&d_pre, &lt.input);
            g.w_up.add_outer(&d_up, &lt.input);
            let via_gate = layer.w_gate.matvec_transposed(&d_pre)?;
            let via_up = layer.w_up.matvec_transposed(&d_up)?;
            for (k, s) in d_stream.iter_mut().enumerate() {
                *s = *s + via_gate[k] + via_up[k];
            }
        }
        Ok(())
    }

    /// Parameters in a fixed order: per layer `W_s, W_1, W_2`, then the head.
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.w_gate.as_slice());
            out.extend_from_slice(l.w_up.as_slice());
            out.extend_from_slice(l.w_down.as_slice());
        }
        out.extend_from_slice(self.head.as_slice());
        out
    }

    pub fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::shape("set_flat", self.param_count(), flat.len()));
        }
        self.stamp.revision += 1;
        let mut rest = flat;
        let mut take = |dst: &mut [T]| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        for l in &mut self.layers {
            take(l.w_gate.as_mut_slice());
            take(l.w_up.as_mut_slice());
            take(l.w_down.as_mut_slice());
        }
        take(self.head.as_mut_slice());
        Ok(())
    }

    pub fn save(&self, stem: &Path, extra: serde_json::Value) -> Result<()> {
        let mut tensors = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            tensors.push(Tensor::from_matrix(format!("layers.{i}.w_gate"), &l.w_gate));
            tensors.push(Tensor::from_matrix(format!("layers.{i}.w_up"), &l.w_up));
            tensors.push(Tensor::from_matrix(format!("layers.{i}.w_down"), &l.w_down));
        }
        tensors.push(Tensor::from_matrix("head", &self.head));
        let activations: Vec<ActivationKind> = self.layers.iter().map(|l| l.activation).collect();
        let metadata = serde_json::json!({
            "num_layers": self.layers.len(),
            "activations": activations,
            "extra": extra,
        });
        tensor_io::write(stem, &tensors, metadata)?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<(Self, serde_json::Value)> {
        let (manifest, tensors) = tensor_io::read(stem)?;
        let activations: Vec<ActivationKind> =
            serde_json::from_value(manifest.metadata["activations"].clone())?;
        let find = |name: &str| -> Result<DenseMatrix<T>> {
            tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::InvalidInput(format!("missing tensor {name}")))?
                .to_matrix()
        };
        let mut layers = Vec::with_capacity(activations.len());
        for (i, &act) in activations.iter().enumerate() {
            layers.push(GatedFfnLayer::new(
                find(&format!("layers.{i}.w_gate"))?,
                find(&format!("layers.{i}.w_up"))?,
                find(&format!("layers.{i}.w_down"))?,
                act,
            )?);
        }
        let model = Self::new(layers, find("head")?)?;
        Ok((model, manifest.metadata["extra"].clone()))
    }
}

#[inline]
fn sign<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Uniform init in `±init_scale / sqrt(d_model)`; draw order is layer by
/// layer (`W_s`, `W_1`, `W_2`, row-major), then the head.
pub fn init_model(cfg: &ModelConfig, rng: &mut SeededRng) -> Result<ToyModel<f64>> {
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    let bound = cfg.init_scale / (cfg.d_model as f64).sqrt();
    let mut draw = |rows, cols| DenseMatrix::from_fn(rows, cols, |_, _| rng.uniform(-bound, bound));
    let mut layers = Vec::with_capacity(cfg.num_layers);
    for _ in 0..cfg.num_layers {
        let w_gate = draw(cfg.d_ff, cfg.d_model);
        let w_up = draw(cfg.d_ff, cfg.d_model);
        let w_down = draw(cfg.d_model, cfg.d_ff);
        layers.push(GatedFfnLayer::new(w_gate, w_up, w_down, cfg.activation)?);
    }
    let head = draw(cfg.output_dim, cfg.d_model);
    ToyModel::new(layers, head)
}

impl<T: Real> ParamGrads<T> {
    pub fn zeros_like(model: &ToyModel<T>) -> Self {
        Self {
            layers: model
                .layers()
                .iter()
                .map(|l| LayerGrads {
                    w_gate: DenseMatrix::zeros(l.d_ff(), l.d_model()),
                    w_up: DenseMatrix::zeros(l.d_ff(), l.d_model()),
                    w_down: DenseMatrix::zeros(l.d_model(), l.d_ff()),
                })
                .collect(),
            head: DenseMatrix::zeros(model.head().rows(), model.head().cols()),
        }
    }

    fn slices_mut(&mut self) -> impl Iterator<Item = &mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.w_gate.as_mut_slice(),
                    l.w_up.as_mut_slice(),
                    l.w_down.as_mut_slice(),
                ]
            })
            .chain(std::iter::once(self.head.as_mut_slice()))
    }

    pub fn add_assign(&mut self, other: &Self) {
        let theirs = other.to_flat();
        let mut offset = 0;
        for s in self.slices_mut() {
            let n = s.len();
            axpy(T::one(), &theirs[offset..offset + n], s);
            offset += n;
        }
    }

    pub fn scale(&mut self, factor: T) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v = *v * factor);
        }
    }

    /// Same ordering as [`ToyModel::to_flat`].
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.w_gate.as_slice());
            out.extend_from_slice(l.w_up.as_slice());
            out.extend_from_slice(l.w_down.as_slice());
        }
        out.extend_from_slice(self.head.as_slice());
        out
    }
}
