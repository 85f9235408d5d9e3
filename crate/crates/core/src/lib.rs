//! Next-frame forecasting for grayscale image sequences.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`). Models
//! train in `f32`; the `f64` instantiation of the same code backs the
//! finite-difference gradient checks. The aliases below name the common
//! instantiations.

// `!(x > 0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cells;
pub mod data;
pub mod error;
pub mod exec;
pub mod gradsuite;
pub mod layers;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type TensorF32 = Tensor<f32>;
pub type TensorF64 = Tensor<f64>;
pub type Model = model::Model<f32>;
pub type ModelF64 = model::Model<f64>;
pub type FrameSequence = data::FrameSequence<f32>;
pub type WindowedDataset = data::WindowedDataset<f32>;
