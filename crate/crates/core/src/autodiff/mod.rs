//! Dense tensors and a define-by-run reverse-mode differentiation tape.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, relative_error, GradCheckOptions, GradCheckReport, ParamCheck};
pub use tape::{logistic, Gradients, Tape, Var};
pub use tensor::Tensor;
