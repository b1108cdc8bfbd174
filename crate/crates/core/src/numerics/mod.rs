//! Dense numeric kernel shared by every trainable model: matrices,
//! activations, losses, optimizers, seeded randomness and gradient checking.
//!
//! All reductions run in a fixed order so that results are bit-reproducible.

mod gradcheck;
mod loss;
mod matrix;
mod optim;
mod params;

pub use gradcheck::grad_check;
pub use loss::{bce_loss, softmax_cross_entropy, PROB_EPSILON};
pub use matrix::{
    affine, affine_backward, axpy, dot, relu, relu_matrix, sigmoid, sigmoid_matrix,
    softmax_in_place, softmax_rows, tanh_matrix, DenseMatrix,
};
pub use optim::{OptimizerKind, OptimizerState};
pub use params::{glorot_uniform, ParamSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// The generator behind every seeded stream in the crate (ChaCha with 8 rounds).
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("gradient check failed: {0}")]
    Check(String),
    #[error("parameter blob: {0}")]
    Format(String),
    #[error("invalid optimizer setting: {0}")]
    Config(String),
}
