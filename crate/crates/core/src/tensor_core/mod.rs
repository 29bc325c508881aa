//! Tensors, reverse-mode autodiff, and the optimizer-side training math.

mod gradcheck;
mod optim;
mod params;
mod scalar;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheck};
pub use optim::{adamw_step, clip_global_norm, lr_at, AdamW, LrSchedule, OptimState};
pub use params::{Bound, Init, Param, ParamId, ParamStore};
pub use scalar::{Precision, Scalar};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{softmax, Tensor};

#[allow(unused_imports)]
pub(crate) use tape::sigmoid;

#[cfg(test)]
mod tests;
