//! Dense kernels, a reverse-mode autodiff tape, Adam and a finite-difference
//! gradient oracle.

mod adam;
mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use adam::Adam;
pub use gradcheck::{grad_check, GraphObjective, Objective};
pub use graph::{Gradients, Graph, NodeId};
pub use params::{BoundParams, ParamStore};
pub use tensor::{softmax, Tensor2};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numeric error: {0}")]
    NonFinite(String),
    #[error("contract error: {0}")]
    Contract(String),
}

impl NumericsError {
    pub(crate) fn shape(op: &str, a: (usize, usize), b: (usize, usize)) -> Self {
        NumericsError::Dimension(format!("{op}: incompatible shapes {}x{} and {}x{}", a.0, a.1, b.0, b.1))
    }
}
