//! Floating-point element types accepted by the numeric core.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar usable as a tensor element.
///
/// Implemented for `f32` and `f64`. Everything in this crate that does
/// arithmetic is generic over it; the file formats always store `f32`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64` (rounds to nearest for `f32`).
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar always widens to f64")
    }

    fn as_f32(self) -> f32 {
        self.to_f32().expect("Scalar always narrows to f32")
    }

    /// Round-trips through `f32`, the on-disk precision.
    fn quantize(self) -> Self {
        Self::of(self.as_f32() as f64)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
