//! Hand-rolled differentiable compute: tensors, ops with analytic
//! gradients, Adam, and a finite-difference checker that pins every
//! backward pass.

pub mod adam;
pub mod gradcheck;
pub mod ops;
pub mod param;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::gradient_check;
pub use param::{ParamSet, Parameter};
pub use tensor::Tensor;
