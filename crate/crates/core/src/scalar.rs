//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! Production paths run on `f32`; finite-difference verification runs the
//! same code on `f64`, where central differences are accurate enough to
//! resolve relative errors of 1e-4.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssignOps};

pub trait Scalar:
    Float + NumAssignOps + Sum + Default + Copy + Send + Sync + Debug + Display + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn from_f32(v: f32) -> Self;
    fn as_f32(self) -> f32;

    #[inline]
    fn half() -> Self {
        Self::from_f64(0.5)
    }
}

macro_rules! impl_scalar {
    ($($t:ty)*) => ($(
        impl Scalar for $t {
            #[inline]
            fn from_f64(v: f64) -> Self { v as $t }
            #[inline]
            fn as_f64(self) -> f64 { self as f64 }
            #[inline]
            fn from_f32(v: f32) -> Self { v as $t }
            #[inline]
            fn as_f32(self) -> f32 { self as f32 }
        }
    )*)
}

impl_scalar!(f32 f64);

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    // Split on sign so exp never overflows.
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
