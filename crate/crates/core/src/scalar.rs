//! Floating-point abstraction shared by every numerical module.
//!
//! Training runs in `f32`; gradient checks, oracles and dataset synthesis run
//! in `f64`. All math is written once against [`Scalar`].

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn to_f64_lossless(self) -> f64 {
        self.to_f64().expect("Scalar widens to f64")
    }

    #[inline]
    fn two() -> Self {
        Self::one() + Self::one()
    }

    #[inline]
    fn half() -> Self {
        Self::of(0.5)
    }

    /// `self` if `self` is finite, else `None`.
    #[inline]
    fn finite(self) -> Option<Self> {
        self.is_finite().then_some(self)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Logistic sigmoid.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Inverse of [`sigmoid`]; `p` must lie in `(0, 1)`.
#[inline]
pub fn logit<T: Scalar>(p: T) -> T {
    (p / (T::one() - p)).ln()
}

/// Element-wise conversion between scalar types.
#[inline]
pub fn cast<A: Scalar, B: Scalar>(x: A) -> B {
    B::of(x.to_f64_lossless())
}

#[inline]
pub fn cast_arr<A: Scalar, B: Scalar, const N: usize>(x: [A; N]) -> [B; N] {
    x.map(cast)
}
