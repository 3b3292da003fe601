//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records each operation together with its forward value in
//! topological order. [`Tape::backward`] walks the tape in reverse from a
//! scalar node and returns a gradient for every recorded node.

mod gradcheck;
mod tape;

pub use gradcheck::{finite_diff_check, relative_error, GradCheck, GradCheckReport};
pub use tape::{Gradients, NodeId, Op, OpKind, Tape, PROB_FLOOR};
