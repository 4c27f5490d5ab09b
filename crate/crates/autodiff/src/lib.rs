//! Automatic differentiation for the surrogate model.
//!
//! Two engines share one op vocabulary:
//!
//! * [`graph`]: scalar expression graphs whose derivatives are themselves
//!   graph nodes, giving exact first and second order partials with respect
//!   to tagged inputs.
//! * [`tape`]: a batched reverse-mode tape over dense matrices, used to train
//!   networks on whole minibatches.

pub mod graph;
pub mod tape;

pub use graph::{GradientRequest, Graph, NodeId, Op, Order};
pub use tape::{Gradients, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("non-finite value at node #{node}: {descriptor}")]
    NonFinite { node: usize, descriptor: String },
    #[error("unknown differentiation tag `{0}`")]
    UnknownTag(String),
    #[error("tag `{0}` is already registered")]
    DuplicateTag(String),
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
}
