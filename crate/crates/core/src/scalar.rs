//! Scalar abstraction shared by the exact and floating-point code paths.
//!
//! Everything that only needs field arithmetic (design matrices, GLS weight
//! matrices, rank checks) is written against [`Scalar`], so the same code runs
//! on `f64`, `f32` and exact rationals. Code that needs logarithms or square
//! roots asks for [`Real`] instead.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{Float, FromPrimitive, Num, Signed, ToPrimitive};

pub trait Scalar:
    Clone + Debug + PartialOrd + Num + Signed + FromPrimitive + Send + Sync + 'static
{
    /// Whether `self` should be treated as zero relative to `scale` (the
    /// largest magnitude in the surrounding computation). Exact types only
    /// ever answer `true` for an exact zero.
    fn is_negligible(&self, scale: &Self) -> bool;

    /// Lossy conversion used for reporting.
    fn to_f64(&self) -> f64;

    fn from_int(v: i64) -> Self {
        Self::from_i64(v).expect("integer is representable")
    }

    fn ratio(num: i64, den: i64) -> Self {
        Self::from_int(num) / Self::from_int(den)
    }
}

/// Floating-point scalars.
pub trait Real: Scalar + Float {}

impl Scalar for f64 {
    fn is_negligible(&self, scale: &Self) -> bool {
        self.abs() <= 1e-11 * scale.abs().max(1.0)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for f32 {
    fn is_negligible(&self, scale: &Self) -> bool {
        self.abs() <= 1e-5 * scale.abs().max(1.0)
    }
    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }
}

impl Real for f64 {}
impl Real for f32 {}

impl Scalar for BigRational {
    fn is_negligible(&self, _scale: &Self) -> bool {
        num_traits::Zero::is_zero(self)
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn from_int(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
}

impl Scalar for Rational64 {
    fn is_negligible(&self, _scale: &Self) -> bool {
        num_traits::Zero::is_zero(self)
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn from_int(v: i64) -> Self {
        Rational64::from_integer(v)
    }
}

/// Exact rational type used for closed-form checks.
pub type Exact = BigRational;
