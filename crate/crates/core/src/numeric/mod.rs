//! Dense `f64` tensors with reverse-mode differentiation and a
//! finite-difference gradient checker.

mod gradcheck;
mod store;
mod tape;

pub use gradcheck::{grad_check, GradCheckReport, REL_ERROR_FLOOR};
pub use store::{ParamSlice, ParamStore, ParamTensor, TensorId};
pub use tape::{
    cosine_values, dot_values, l2_normalize_values, norm_values, sigmoid, softmax_values, Gradients, Shape, Tape,
    Var, DEGENERATE_VARIANCE, LAYER_NORM_EPS, MIN_NORM,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{op} called on an empty input set")]
    EmptyInput { op: &'static str },
    #[error("layer normalization input is degenerate (variance {variance:e})")]
    DegenerateNorm { variance: f64 },
    #[error("{op} on a zero-norm vector")]
    ZeroNorm { op: &'static str },
    #[error("probe point lies {margin:e} from a kink of a piecewise operation")]
    KinkAdjacent { margin: f64 },
}
