//! Operands for the kernel benchmarks, shared by the criterion targets.

use actsparse_core::kernels::bench::BenchFixture;
use actsparse_core::kernels::{step2_into, SparseActivationVector};
use actsparse_core::ActivationKind;

pub use actsparse_core::kernels::bench::gate_pattern;

pub const D_MODEL: usize = 1024;
pub const D_FF: usize = 4096;
pub const LEVELS: [f64; 5] = [0.0, 0.5, 0.7, 0.9, 0.95];

/// Weights, input and gate values for one sparsity level, plus the dense and
/// compressed `x_1` that step 3 consumes.
pub struct Case {
    pub fixture: BenchFixture,
    pub x1: SparseActivationVector<f32>,
    pub x1_dense: Vec<f32>,
}

impl Case {
    pub fn new(d_model: usize, d_ff: usize, level: f64, seed: u64) -> Self {
        let mut fixture = BenchFixture::weights(d_model, d_ff, seed);
        fixture.set_sparsity(level, 0.0, seed);
        let mut x1 = SparseActivationVector::with_capacity(d_ff, d_ff);
        step2_into(&fixture.z, &fixture.w_up_t, &fixture.x, ActivationKind::Relu, &mut x1, &mut ())
            .expect("fixture shapes agree");
        let x1_dense = x1.to_dense();
        Self { fixture, x1, x1_dense }
    }

    pub fn sparsity(&self) -> f64 {
        1.0 - self.x1.nnz() as f64 / self.x1.len() as f64
    }
}
