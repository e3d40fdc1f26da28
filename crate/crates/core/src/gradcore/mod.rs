//! Dense tensors, sparse propagation matrices and a reverse-mode tape that
//! can differentiate through its own backward pass.

mod check;
mod sparse;
mod tape;
mod tensor;

pub use check::{
    analytic_gradient, eval_scalar, fd_check, fd_check_extended, fd_step, numeric_gradient,
    relative_error, ScalarFn,
};
pub use sparse::SparseMatrix;
pub use tape::{Tape, Var};
pub use tensor::Tensor;
pub(crate) use tensor::sigmoid;


