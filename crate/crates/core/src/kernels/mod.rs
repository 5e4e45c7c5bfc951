//! CPU sparse operators for a ReLU-gated FFN, split into three steps:
//!
//! 1. `z = W_s x`, a plain dense matvec;
//! 2. a fused gate + matvec + elementwise product that only reads the columns
//!    of `W_1ᵀ` whose gate survives (output-side sparsity);
//! 3. `out = W_2 x_1` accumulated over the active entries of `x_1` only
//!    (input-side sparsity).
//!
//! Both weight operands of steps 2 and 3 are stored column-major so each
//! active column is one contiguous read.

pub mod bench;
mod layout;

pub use layout::{ColumnMajorWeights, SparseActivationVector};

use rayon::prelude::*;

use crate::activations::ActivationKind;
use crate::error::{Error, Result};
use crate::gated_ffn::GatedFfnLayer;
use crate::numerics::{axpy, dot, DenseMatrix, Real};

/// Multiply-accumulate accounting hook. `()` compiles to nothing.
pub trait MacCounter {
    fn add(&mut self, macs: usize);
}

impl MacCounter for () {
    #[inline(always)]
    fn add(&mut self, _: usize) {}
}

/// Counts multiply-accumulates executed by the sparse kernels.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OpCounter {
    pub macs: u64,
}

impl MacCounter for OpCounter {
    #[inline]
    fn add(&mut self, macs: usize) {
        self.macs += macs as u64;
    }
}

/// Gate rule shared by the sparse kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Gate<T> {
    /// `z > 0`.
    Relu,
    /// `z >= threshold`.
    AtLeast(T),
}

impl<T: Real> Gate<T> {
    fn from_kind(kind: ActivationKind) -> Result<Self> {
        match kind {
            ActivationKind::Relu => Ok(Self::Relu),
            ActivationKind::FatRelu { threshold } => Ok(Self::AtLeast(T::lit(threshold))),
            other => Err(Error::UnsupportedActivation(other.to_string())),
        }
    }

    #[inline(always)]
    fn open(self, z: T) -> bool {
        match self {
            Self::Relu => z > T::zero(),
            Self::AtLeast(t) => z >= t,
        }
    }
}

/// Step 1: dense `z = W_s x`.
pub fn step1_dense_gate<T: Real>(w_gate: &DenseMatrix<T>, x: &[T]) -> Result<Vec<T>> {
    w_gate.matvec(x)
}

/// Step 2: `x_1[j] = z[j] * <x, W_1[j, :]>` for every `j` whose gate is open.
///
/// `w_up_t` holds `W_1ᵀ` (`d_model x d_ff`) column-major. Columns behind a
/// closed gate are never read.
pub fn step2_fused_output_sparse<T: Real>(
    z: &[T],
    w_up_t: &ColumnMajorWeights<T>,
    x: &[T],
    activation: ActivationKind,
) -> Result<SparseActivationVector<T>> {
    let mut out = SparseActivationVector::with_capacity(z.len(), z.len());
    step2_into(z, w_up_t, x, activation, &mut out, &mut ())?;
    Ok(out)
}

/// [`step2_fused_output_sparse`] into a reusable buffer, with MAC accounting.
pub fn step2_into<T: Real, C: MacCounter>(
    z: &[T],
    w_up_t: &ColumnMajorWeights<T>,
    x: &[T],
    activation: ActivationKind,
    out: &mut SparseActivationVector<T>,
    counter: &mut C,
) -> Result<()> {
    check_step2(z, w_up_t, x)?;
    let gate = Gate::from_kind(activation)?;
    out.reset(z.len());
    for (j, &zj) in z.iter().enumerate() {
        if gate.open(zj) {
            counter.add(x.len());
            out.push_unchecked(j as u32, zj * dot(x, w_up_t.column(j)));
        }
    }
    Ok(())
}

fn check_step2<T: Real>(z: &[T], w_up_t: &ColumnMajorWeights<T>, x: &[T]) -> Result<()> {
    if z.len() != w_up_t.cols() {
        return Err(Error::shape("step2", format!("z.len = {}", w_up_t.cols()), z.len()));
    }
    if x.len() != w_up_t.rows() {
        return Err(Error::shape("step2", format!("x.len = {}", w_up_t.rows()), x.len()));
    }
    Ok(())
}

/// Step 2 with the active columns split across the rayon pool.
pub fn step2_parallel<T: Real>(
    z: &[T],
    w_up_t: &ColumnMajorWeights<T>,
    x: &[T],
    activation: ActivationKind,
) -> Result<SparseActivationVector<T>> {
    check_step2(z, w_up_t, x)?;
    let gate = Gate::from_kind(activation)?;
    let indices: Vec<u32> = (0..z.len() as u32).filter(|&j| gate.open(z[j as usize])).collect();
    let values: Vec<T> = indices
        .par_iter()
        .map(|&j| z[j as usize] * dot(x, w_up_t.column(j as usize)))
        .collect();
    SparseActivationVector::new(z.len(), indices, values)
}

/// Step 3: `out = Σ_j x_1[j] · W_2[:, j]` over active `j`.
///
/// `w_down` holds `W_2` (`d_model x d_ff`) column-major.
pub fn step3_input_sparse_matvec<T: Real>(
    x1: &SparseActivationVector<T>,
    w_down: &ColumnMajorWeights<T>,
) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); w_down.rows()];
    step3_into(x1, w_down, &mut out, &mut ())?;
    Ok(out)
}

pub fn step3_into<T: Real, C: MacCounter>(
    x1: &SparseActivationVector<T>,
    w_down: &ColumnMajorWeights<T>,
    out: &mut [T],
    counter: &mut C,
) -> Result<()> {
    check_step3(x1.len(), w_down, out)?;
    out.fill(T::zero());
    for (j, v) in x1.iter() {
        counter.add(out.len());
        axpy(v, w_down.column(j), out);
    }
    Ok(())
}

fn check_step3<T: Real>(d_ff: usize, w_down: &ColumnMajorWeights<T>, out: &[T]) -> Result<()> {
    if d_ff != w_down.cols() {
        return Err(Error::shape("step3", format!("x1.len = {}", w_down.cols()), d_ff));
    }
    if out.len() != w_down.rows() {
        return Err(Error::shape("step3", format!("out.len = {}", w_down.rows()), out.len()));
    }
    Ok(())
}

/// Step 3 over a dense vector that contains zeros; zero entries are skipped.
pub fn step3_dense_input<T: Real>(x1: &[T], w_down: &ColumnMajorWeights<T>, out: &mut [T]) -> Result<()> {
    check_step3(x1.len(), w_down, out)?;
    out.fill(T::zero());
    for (j, &v) in x1.iter().enumerate() {
        if v != T::zero() {
            axpy(v, w_down.column(j), out);
        }
    }
    Ok(())
}

/// Step 3 with active entries partitioned across the rayon pool; partial sums
/// are reduced in partition order.
pub fn step3_parallel<T: Real>(
    x1: &SparseActivationVector<T>,
    w_down: &ColumnMajorWeights<T>,
    partitions: usize,
) -> Result<Vec<T>> {
    let d_model = w_down.rows();
    check_step3(x1.len(), w_down, &vec![T::zero(); d_model])?;
    let nnz = x1.nnz();
    let chunk = nnz.div_ceil(partitions.max(1)).max(1);
    let partials: Vec<Vec<T>> = (0..nnz)
        .step_by(chunk)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let mut acc = vec![T::zero(); d_model];
            for k in start..(start + chunk).min(nnz) {
                let (j, v) = x1.entry(k);
                axpy(v, w_down.column(j), &mut acc);
            }
            acc
        })
        .collect();
    let mut out = vec![T::zero(); d_model];
    for p in &partials {
        axpy(T::one(), p, &mut out);
    }
    Ok(out)
}

/// A gated FFN layer prepared for the sparse path.
#[derive(Debug, Clone)]
pub struct SparseFfnLayer<T = f32> {
    w_gate: DenseMatrix<T>,
    w_up_t: ColumnMajorWeights<T>,
    w_down: ColumnMajorWeights<T>,
    activation: ActivationKind,
}

/// Reusable buffers for [`SparseFfnLayer::forward_into`].
#[derive(Debug, Clone, Default)]
pub struct SparseFfnScratch<T = f32> {
    pub z: Vec<T>,
    pub x1: SparseActivationVector<T>,
}

impl<T: Real> SparseFfnLayer<T> {
    pub fn from_layer(layer: &GatedFfnLayer<T>) -> Result<Self> {
        if !layer.activation.is_kernel_supported() {
            return Err(Error::UnsupportedActivation(layer.activation.to_string()));
        }
        Ok(Self {
            w_gate: layer.w_gate.clone(),
            w_up_t: ColumnMajorWeights::of_transpose(&layer.w_up),
            w_down: ColumnMajorWeights::from_row_major(&layer.w_down),
            activation: layer.activation,
        })
    }

    pub fn d_model(&self) -> usize {
        self.w_gate.cols()
    }

    pub fn d_ff(&self) -> usize {
        self.w_gate.rows()
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        let mut scratch = SparseFfnScratch::default();
        let mut out = vec![T::zero(); self.d_model()];
        self.forward_into(x, &mut scratch, &mut out, &mut ())?;
        Ok(out)
    }

    pub fn forward_into<C: MacCounter>(
        &self,
        x: &[T],
        scratch: &mut SparseFfnScratch<T>,
        out: &mut [T],
        counter: &mut C,
    ) -> Result<()> {
        scratch.z.resize(self.d_ff(), T::zero());
        self.w_gate.matvec_into(x, &mut scratch.z)?;
        step2_into(&scratch.z, &self.w_up_t, x, self.activation, &mut scratch.x1, counter)?;
        step3_into(&scratch.x1, &self.w_down, out, counter)
    }
}

/// Sparse three-step FFN output (no residual) for a ReLU or FATReLU layer.
pub fn ffn_forward_sparse<T: Real>(layer: &GatedFfnLayer<T>, x: &[T]) -> Result<Vec<T>> {
    SparseFfnLayer::from_layer(layer)?.forward(x)
}
