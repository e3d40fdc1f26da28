//! Meta-inductive node classification.
//!
//! A task prior (GNN weights) and a graph prior (a hypernetwork emitting
//! per-parameter FiLM scale and shift) are meta-learned over training graphs.
//! On a new graph the prior is first transformed by the graph's own
//! representation, then adapted by a few gradient steps on its labeled
//! nodes, and finally used to classify the remaining nodes.

pub mod error;
pub mod gradcore;
pub mod encoders;
pub mod graphdata;
pub mod harness;
pub mod kv;
pub mod meta;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::{Quad, Scalar};

pub type Tensor64 = gradcore::Tensor<f64>;
pub type Graph64 = graphdata::Graph<f64>;
pub type GraphCollection64 = graphdata::GraphCollection<f64>;
pub type ParamVector64 = encoders::ParamVector<f64>;
pub type GraphPrior64 = meta::GraphPrior<f64>;
pub type Episode64 = meta::Episode<f64>;
pub type MetaState64 = meta::MetaState<f64>;
pub type Model64 = harness::Model<f64>;
