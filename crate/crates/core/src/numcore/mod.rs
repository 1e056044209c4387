//! Dense matrices, reverse-mode differentiation and gradient checking.

mod gradcheck;
mod matrix;
mod params;
mod tape;

pub use gradcheck::{finite_diff_check, finite_diff_check_subset, relative_error, GradCheckReport};
pub use matrix::{Matrix, Real};
pub use params::{Grad, Gradients, ParamId, ParamKind, ParamStore, Parameter};
pub use tape::{softmax, Tape, Var, LOG_CLAMP};
