//! Graph-aggregated heterogeneous network embedding.
//!
//! The crate decomposes a heterogeneous graph into one sub-network per
//! relation type, runs a K-order random-walk graph convolution on each,
//! merges the per-relation channels with an attention, gated, pooling or
//! mean aggregator after every layer, fuses the result with a whole-graph
//! convolution branch and trains the stack semi-supervised with Adam.
//! Embeddings are evaluated with KNN classification (Macro/Micro-F1) and
//! K-means clustering (NMI/ARI).

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod diff;
pub mod error;
pub mod eval;
pub mod hetgraph;
pub mod linalg;
pub mod model;
pub mod seed;
pub mod train;

pub use error::{Error, Result};
