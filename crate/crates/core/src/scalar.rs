//! Floating point scalars the numeric core is generic over.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point element type: `f32`, `f64` or [`Quad`].
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for constants and hyperparameters.
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// IEEE binary128 (113-bit significand), used where an oracle must be far
/// more precise than the `f64` code it checks.
pub type Quad = f128::f128;

impl Scalar for Quad {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quad_keeps_fractions_and_extra_digits() {
        assert_eq!(Quad::of(-1.2).as_f64(), -1.2);
        let third = Quad::of(1.0) / Quad::of(3.0);
        let residual = third - Quad::of(third.as_f64());
        // 1/3 − fl64(1/3) = 1/(3·2^54)
        assert_eq!(residual.as_f64(), 1.0 / (3.0 * 2f64.powi(54)));
    }
}
