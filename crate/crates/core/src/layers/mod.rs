//! Non-recurrent layers: dense, batch normalization, dropout, and weight
//! initialization.

mod batchnorm;
mod dense;
mod dropout;
mod init;

pub use batchnorm::{
    batchnorm, batchnorm_backward, batchnorm_inference, BatchNormCache, BatchNormGrads,
    BatchNormParams,
};
pub use dense::{dense, dense_backward, dense_forward, DenseCache, DenseGrads, DenseParams};
pub use dropout::{dropout, dropout_backward, DropoutMask};
pub use init::glorot_init;

use crate::scalar::{sigmoid, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::None => x,
            Activation::Relu => crate::tensor::relu(x),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::None => T::one(),
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::None => "none",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Activation::None),
            "relu" => Some(Activation::Relu),
            "sigmoid" => Some(Activation::Sigmoid),
            _ => None,
        }
    }
}
