//! Minimal differentiable core for the tagger: dense 64-bit tensors, a
//! parameter store with Adam state, an LSTM cell with hand-written
//! backward pass, softmax cross-entropy, dropout, gradient clipping, a
//! finite-difference checker and a binary checkpoint container.

mod adam;
mod checkpoint;
mod gradcheck;
mod lstm;
mod ops;
mod params;
mod tensor;

use thiserror::Error;

pub use adam::{adam_step, clip_gradients, AdamConfig};
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{gradient_check, GradientCheck};
pub use lstm::{lstm_step, lstm_step_backward, LstmCache, LstmCellState};
pub use ops::{
    dot, dropout_mask, log_softmax, matvec_acc, matvec_t_acc, outer_acc, sigmoid, softmax, softmax_cross_entropy,
};
pub use params::{Gradients, ParamId, Parameter, ParameterStore};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: String, got: String },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("dropout probability {0} must lie in [0, 1)")]
    InvalidProbability(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn dim_err(expected: impl ToString, got: impl ToString) -> NnError {
    NnError::Dimension { expected: expected.to_string(), got: got.to_string() }
}
