//! Dense-network substrate: matrices, dense layers with analytic
//! backpropagation, Adam, seeded randomness, gradient checking and checkpoints.
//!
//! Everything is `f64`. Forward passes are pure; only [`AdamState::step`]
//! mutates parameters.

mod adam;
mod checkpoint;
mod gradcheck;
mod layer;
mod matrix;
mod mlp;
mod rng;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, LayerRecord, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use gradcheck::{gradient_check, relative_error, GradCheckReport, DEFAULT_EPSILON};
pub use layer::{
    clamp_probability, sigmoid, Activation, DenseCache, DenseGrads, DenseLayer, PROB_CEIL, PROB_FLOOR,
};
pub use matrix::Matrix;
pub use mlp::{flatten_grads, grad_slices, softmax, softmax_cross_entropy, squared_error, Mlp, MlpCache};
pub use rng::{sample_standard_normal, Rng};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: expected {expected:?}, got {got:?}")]
    Shape {
        op: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("buffer of length {len} cannot form a {rows}x{cols} matrix")]
    BufferLength { rows: usize, cols: usize, len: usize },
    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("non-finite gradient in parameter slot {slot} at index {index}")]
    NonFiniteGradient { slot: usize, index: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("duplicate layer name `{0}`")]
    DuplicateLayer(String),
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
