//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! The engine is a dynamic (define-by-run) tape: operations compute values
//! eagerly and record nodes on a [`Tape`]; [`Tape::backward`] walks the
//! recorded nodes in reverse to accumulate gradients into every
//! gradient-tracked leaf. Any operation that produces a NaN or infinity
//! aborts with an error naming the offending node — non-finite values never
//! propagate silently.
//!
//! One tape is single-threaded; independent tapes (e.g. cross-validation
//! folds) may live on separate threads as they share no state.

mod gradcheck;
mod optim;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use optim::{adam_step, AdamHyper, AdamState};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

/// Errors raised by tensor construction, tape operations, and the optimizer.
#[derive(Debug, Error)]
pub enum NdError {
    #[error("shape mismatch in `{op}`: {details}")]
    ShapeMismatch { op: &'static str, details: String },
    #[error("non-finite value produced by `{op}` at tape node {node}")]
    NonFinite { op: &'static str, node: usize },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,
    #[error("backward on an empty tape")]
    EmptyTape,
    #[error("index {index} out of range for {what} of size {size}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Shorthand result type for engine operations.
pub type Result<T> = std::result::Result<T, NdError>;
