//! Scalar traits the rest of the crate is generic over.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, Num, Signed, ToPrimitive};

/// Exact field scalar: everything the pure linear-algebra paths need
/// (Gaussian elimination, determinants, projective transforms).
///
/// Implemented by `f32`/`f64` and by exact rationals such as
/// `num_rational::BigRational`, so gauge-fixing transforms can be computed
/// without rounding when the inputs are rational.
pub trait Field: Num + Signed + Clone + PartialOrd + Debug {}

impl<T> Field for T where T: Num + Signed + Clone + PartialOrd + Debug {}

/// Floating-point scalar for the numeric paths (eigensolves, image sampling,
/// statistics). `f32` or `f64`.
pub trait Real:
    Field + Float + FromPrimitive + ToPrimitive + Copy + Default + Display + Sum + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for converting an `f64` constant into the working scalar.
#[inline]
pub fn r<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("constant representable in scalar type")
}
