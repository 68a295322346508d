//! Minimal reverse-mode autodiff over dense CPU tensors.
//!
//! Matrix products go through `matrixmultiply`; convolutions use im2col so
//! both forward and backward passes reduce to matrix products. Models are
//! generic over [`Float`] so the same code runs in `f32` for training and in
//! `f64` for finite-difference gradient checks.

pub mod checkpoint;
mod float;
pub mod gradcheck;
pub mod nn;
mod ops;
pub mod optim;
mod param;
mod tensor;
mod var;

pub use float::Float;
pub use ops::conv::Conv2dGeom;
pub use ops::elementwise::sigmoid;
pub use ops::norm::BatchStats;
pub use ops::sample::lattice_coord;
pub use param::{scoped, Ctx, Module, Param, ParamId};
pub use tensor::Tensor;
pub use var::{Grads, Var};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TensorError {
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
}
