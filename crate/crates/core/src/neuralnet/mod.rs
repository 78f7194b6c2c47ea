//! Minimal dense tensor engine with reverse-mode differentiation: just
//! enough for one LSTM cell per direction, a single-hidden-layer MLP, a
//! linear projection, softmax/cross-entropy, inverted dropout and Adam.
//!
//! Everything is 64-bit: the models are small and the finite-difference
//! gradient checks need the precision.

mod adam;
mod gradcheck;
mod ops;
mod tape;
mod tensor;

pub use adam::{adam_step, clip_global_norm, AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckOptions};
pub use ops::{
    cross_entropy, dropout_mask, lstm_init, lstm_step, mlp_forward, run_lstm, softmax,
    xavier_uniform, LstmParams,
};
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch in {context}: {detail}")]
    ShapeMismatch {
        context: &'static str,
        detail: String,
    },
    #[error("non-finite values produced by {0}")]
    NonFinite(&'static str),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("dropout rate must be in [0, 1), got {0}")]
    BadDropoutRate(f64),
    #[error("{0}")]
    Invalid(String),
}
