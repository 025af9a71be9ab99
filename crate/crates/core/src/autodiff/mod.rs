//! Minimal reverse-mode automatic differentiation over dense `f64` matrices,
//! with the Adam optimizer and gradient clipping used by the trainer.

mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{finite_difference_check, finite_difference_check_with, gradient_report, GradReport};
pub use optim::{clip_global_norm, clip_param_grads, AdamState};
pub use params::{GradBuf, Gradients, Param, ParamId, ParamKind, ParamStore};
pub use tape::{sigmoid, softmax_row, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
