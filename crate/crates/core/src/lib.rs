//! Multi-vector late-interaction retrieval with token-aware clustering,
//! residual product quantization and a centroid graph.

pub mod centroid_index;
pub mod cli;
pub mod corpus;
pub mod engine;
pub mod error;
pub mod format;
pub mod kernels;
pub mod pq;
pub mod synth;
pub mod tac;

pub use error::{Error, Result};
