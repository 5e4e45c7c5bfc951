//! Activation sparsity for gated feed-forward networks: a small trainable
//! model, sparsity-inducing training recipes, activation-mask prediction and
//! sparse inference kernels.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activations;
pub mod error;
pub mod experiment;
pub mod gated_ffn;
pub mod kernels;
pub mod numerics;
pub mod optim;
pub mod predictor;
pub mod regularization;
pub mod sparsity;
pub mod trainer;

pub use activations::ActivationKind;
pub use error::{Error, Result};
pub use experiment::{run_pipeline, validate_config, PipelineConfig};
pub use gated_ffn::{init_model, ForwardTrace, GatedFfnLayer, LayerTrace, ModelConfig, ParamGrads, ToyModel};
pub use kernels::{ffn_forward_sparse, ColumnMajorWeights, SparseActivationVector, SparseFfnLayer};
pub use numerics::{DenseMatrix, DenseVector, SeededRng};
pub use regularization::{LrSchedule, RegularizationSchedule, Stage};
pub use sparsity::{measure, threshold_sweep, SparsityReport, ThresholdSweepResult};
pub use trainer::{Method, TrainConfig, TrainOutcome};
