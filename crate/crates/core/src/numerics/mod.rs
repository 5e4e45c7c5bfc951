//! Dense linear-algebra substrate shared by the training and kernel paths.
//!
//! Training code runs in `f64` so finite-difference checks stay sharp; the
//! sparse kernels and their benchmarks run in `f32`. Everything here is
//! generic over [`Real`] so the same forward code serves both.

mod gradcheck;
mod matrix;
mod rng;
pub mod tensor_io;

pub use gradcheck::grad_check;
pub use matrix::{axpy, dot, max_relative_deviation, DenseMatrix, DenseVector};
pub use rng::SeededRng;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;

/// Floating-point element type usable by matrices, activations and kernels.
pub trait Real:
    Float + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Dtype tag used by the tensor manifest.
    const DTYPE: &'static str;
    const BYTES: usize;

    fn lit(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Real for f32 {
    const DTYPE: &'static str = "f32";
    const BYTES: usize = 4;

    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Real for f64 {
    const DTYPE: &'static str = "f64";
    const BYTES: usize = 8;

    #[inline]
    fn lit(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}
