pub mod dataio;
pub mod error;
pub mod intershap;
pub mod models;
pub mod numcore;
pub mod stats;
pub mod survival;
pub mod synthbench;

pub use error::{Error, Result};

/// Matrix at the working precision.
pub type Matrix = numcore::Matrix<f64>;
pub type Graph = numcore::Graph<f64>;
pub type GraphBuilder = numcore::GraphBuilder<f64>;
pub type AdamState = numcore::AdamState<f64>;
