//! Scalar abstraction shared by the cost model and the solvers.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless widening used by the wire codec and report writers.
    fn to_f64_lossless(self) -> f64;
    fn from_f64_lossy(v: f64) -> Self;
}

impl Scalar for f32 {
    fn to_f64_lossless(self) -> f64 {
        f64::from(self)
    }
    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    fn to_f64_lossless(self) -> f64 {
        self
    }
    fn from_f64_lossy(v: f64) -> Self {
        v
    }
}

/// Converts a count into the scalar domain.
#[inline]
pub fn from_count<T: Scalar>(v: usize) -> T {
    T::from_usize(v).expect("count representable as a float")
}
