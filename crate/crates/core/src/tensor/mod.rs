//! Dense and sparse matrices, differentiable primitives and a
//! finite-difference checker for them.

mod gradcheck;
pub mod kernels;
mod matrix;
mod sparse;
mod tape;

pub use gradcheck::grad_check;
pub use matrix::Matrix;
pub use sparse::SparseCsr;
pub use tape::{Gradients, OpKind, Tape, Var};

#[cfg(test)]
mod tests;
