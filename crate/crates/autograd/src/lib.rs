//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records one forward pass as a tape of nodes. Parameters live
//! in a [`ParamStore`] outside the graph; [`Graph::param`] copies a parameter
//! into the tape as a leaf, and [`Graph::backward`] returns the gradients for
//! every trainable parameter that participated in the pass.
//!
//! Layouts follow the usual batch-first conventions: sequences are
//! `[B, C, K]`, waveforms `[B, T]`, videos `[B, C, F, H, W]`.

mod graph;
mod linalg;
pub mod ops;
mod params;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use params::{ParamId, ParamKind, ParamStore};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, GraphError>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(GraphError::Shape(msg.into()))
}
