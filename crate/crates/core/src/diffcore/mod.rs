//! Dense float64 tensors, a reverse-mode tape, MLPs and Adam.
//!
//! Everything here is deliberately small: the primitives cover exactly what
//! the operator architectures need, including the graph-aggregation
//! primitives ([`Tape::kernel_integral`], [`Tape::edge_contract`],
//! [`Tape::edge_scatter`]) that evaluate quadrature sums without
//! materializing one matrix per edge.

mod adam;
mod gradcheck;
mod graph;
pub mod io;
mod kernels;
mod mlp;
mod tape;
mod tensor;

use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error, GradCheckOptions, GradCheckReport, GroupReport};
pub use graph::EdgeList;
pub use mlp::{mlp_forward, Activation, DenseLayer, MlpParams, MlpVars};
pub use tape::{CustomBackward, Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{op}: non-finite value at flat index {index}")]
    NonFinite { op: &'static str, index: usize },
    #[error("expected a scalar, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("{op}: index {index} out of range for length {len}")]
    Index {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("loss was not recorded on this tape")]
    NotOnTape,
}
