//! Dense matrices, reverse-mode autodiff over static graphs, and Adam.

mod adam;
mod graph;
mod matrix;
pub mod rng;
mod scalar;

pub use adam::{AdamConfig, AdamState};
pub use graph::{Graph, GraphBuilder, Init, Mode, NodeId, Op, ParamDecl};
pub use matrix::Matrix;
pub use scalar::Scalar;
