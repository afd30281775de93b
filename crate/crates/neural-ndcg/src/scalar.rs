use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssignOps, NumCast};

/// Floating-point scalar the numerical core is generic over.
///
/// `f64` is the operational choice throughout the trainer and CLI — the
/// τ → 0 regime of the sorting relaxation underflows single precision
/// quickly — but the core compiles for `f32` as well.
pub trait Scalar:
    Float + FromPrimitive + NumAssignOps + NumCast + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy cast from `f64`, for literals and precomputed constants.
    fn cast(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("f64 literal representable in scalar type")
    }

    /// Cast from a count.
    fn from_count(n: usize) -> Self {
        <Self as NumCast>::from(n).expect("usize representable in scalar type")
    }

    /// ln 2, used to move between natural and base-2 logarithms.
    fn ln_2() -> Self {
        Self::cast(std::f64::consts::LN_2)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
