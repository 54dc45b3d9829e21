//! Minimal dense-tensor engine with eager forward evaluation and a taped
//! reverse pass.
//!
//! A [`Graph`] records every operation as it is evaluated. Nodes are appended
//! in evaluation order, so the node list is already topologically sorted and
//! [`Graph::backward`] simply walks it in reverse. Parameters are leaves marked
//! trainable; everything reachable from them carries gradient.
//!
//! ```
//! use akd_core::autograd::{Graph, Tensor};
//!
//! let mut g = Graph::<f64>::new();
//! let w = g.parameter(Tensor::scalar(2.0).reshape(&[1, 1]).unwrap());
//! let x = g.constant(Tensor::scalar(3.0).reshape(&[1, 1]).unwrap());
//! let y = g.constant(Tensor::scalar(5.0).reshape(&[1, 1]).unwrap());
//! let pred = g.matmul(w, x).unwrap();
//! let loss = g.mse(pred, y).unwrap();
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.get(w).unwrap().data(), &[6.0]);
//! ```

mod graph;
mod kernels;
mod optim;
mod tensor;

use thiserror::Error;

pub use graph::{Gradients, Graph, NodeId, OpKind};
pub use optim::{adam_step, sgd_step, AdamState, OptimizerState};
pub use tensor::{Element, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    Forward,
    Backward,
}

impl std::fmt::Display for Pass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Pass::Forward => "forward",
            Pass::Backward => "backward",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutogradError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: invalid input shape {shape:?}, expected {expected}")]
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        expected: String,
    },
    #[error("{op}: expected {expected} inputs, got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{op}: temperature must be positive and finite, got {value}")]
    InvalidTemperature { op: &'static str, value: f64 },
    #[error("{op}: {detail}")]
    Unsupported { op: &'static str, detail: String },
    #[error("cross_entropy: label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("node {0} does not exist in this graph")]
    UnknownNode(usize),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite value during {pass} at node {node} ({op})")]
    NonFinite {
        pass: Pass,
        node: usize,
        op: &'static str,
    },
    #[error("missing gradient for parameter {0}")]
    MissingGradient(usize),
    #[error("optimizer state does not match parameters: {0}")]
    StateMismatch(String),
}
