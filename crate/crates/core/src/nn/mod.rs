//! Dense differentiable numeric core.
//!
//! 64-bit matrices, a per-sample reverse-mode tape, Adam and checkpoint I/O.

mod checkpoint;
pub mod gradcheck;
mod matrix;
mod params;
mod tape;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use matrix::{matmul, normalize_adjacency, row_softmax, Matrix};
pub use params::{GradBuffer, ParamId, ParamStore, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use tape::{softmax_cross_entropy, CustomOp, Gradients, Tape, Var};
