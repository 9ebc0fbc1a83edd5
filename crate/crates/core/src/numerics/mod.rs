//! Dense tensors, the layer primitives the network is built from, and a
//! finite-difference gradient checker.

mod gradcheck;
pub mod ops;
mod tensor;

pub use gradcheck::{
    grad_check, relative_error, GradCheckReport, ParamCheck, Probe, REL_ERR_FLOOR,
};
pub use ops::*;
pub use tensor::{Param, ParamSet, Tensor};
