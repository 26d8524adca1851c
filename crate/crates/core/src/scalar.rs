//! Scalar abstraction used by every numeric kernel in the crate.
//!
//! All algorithms are written against [`Scalar`] so the same code runs in
//! `f32` or `f64`. Double precision is the default everywhere it matters;
//! the single-precision instantiation exists for memory-bound simulation
//! work and is exercised by the test suite.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar type: implemented by `f32` and `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}

/// Converts an `f64` literal or configuration value into `T`.
///
/// Panics only if `T` cannot represent any finite `f64`, which does not
/// happen for the supported scalar types.
#[inline]
pub fn real<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("finite value representable in scalar type")
}
