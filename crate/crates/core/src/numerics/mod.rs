//! Dense tensors, a reverse-mode autodiff tape, Adam, and a
//! finite-difference gradient checker. Everything the trainable modules in
//! this crate are built on.
//!
//! Training math is double precision throughout; checkpoints are stored in
//! single precision (see [`crate::checkpoint`]).

mod adam;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::Adam;
pub use gradcheck::{grad_check, CoordCheck, GradCheckConfig, GradCheckReport};
pub use params::{ParamId, ParamStore, Parameter};
pub use tape::{window_bounds, Tape, Var};
pub use tensor::{cosine_value, dot, mat_mul, Tensor};
