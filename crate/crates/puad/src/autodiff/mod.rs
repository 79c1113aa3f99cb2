//! Minimal reverse-mode differentiation core.
//!
//! Dense f64 tensors, a per-minibatch tape (`Graph`), named parameter
//! collections, and a finite-difference gradient checker. Everything the
//! loss family needs — affine layers, the usual activations, reductions
//! including `abs`, and scalar means over many nodes — and nothing more:
//! no convolutions, no graph optimization, single-threaded per graph.

mod check;
mod graph;
mod params;
mod tensor;

pub use check::grad_check;
pub use graph::{BinaryKind, Graph, NodeId, ReduceKind, UnaryKind};
pub use params::{BoundParams, ParameterSet};
pub use tensor::Tensor;
