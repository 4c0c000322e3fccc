//! Time series to graph mappings and a dual-branch graph classifier for
//! radio I/Q frames.
//!
//! * [`visibility`]: fixed-rule mappings (natural, horizontal and limited
//!   penetrable visibility graphs).
//! * [`avg`]: the learnable adaptive visibility graph, a bank of 1-D
//!   convolutions producing a banded weighted adjacency.
//! * [`diffpool`]: GCN layers, differentiable pooling and the full
//!   two-branch network.
//! * [`train`]: training loop, learning-rate schedule and metrics.

pub mod avg;
pub mod diffpool;
pub mod error;
pub mod graph;
pub mod nn;
pub mod signal;
pub mod train;
pub mod visibility;

pub use error::{Error, Result};
