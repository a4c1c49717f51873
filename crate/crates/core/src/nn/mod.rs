//! Minimal dense network kernel: row-major matrices, fully-connected layers
//! with ReLU or identity activations, reverse-mode gradients and Adam.
//!
//! Everything is `f64`. Matrix products go through `matrixmultiply`'s
//! single-threaded `dgemm`, so results are reproducible run to run.

mod adam;
mod layer;
mod matrix;

pub use adam::{adam_step, AdamConfig, AdamState, LrSchedule};
pub use layer::{Activation, DenseLayer, LayerGrads, Mlp, MlpGrads, MlpTrace};
pub use matrix::{matmul_a_b, matmul_a_bt, matmul_at_b_acc, Matrix};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite gradient")]
    NonFiniteGradient,
}
