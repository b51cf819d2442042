//! Scalar abstraction shared by the geometry modules.
//!
//! Mesh, contour and toolpath code is written once against [`Scalar`] and
//! instantiated for `f64` (the default everywhere) and `f32`.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point type usable for millimeter geometry.
///
/// `Display` must round-trip through `FromStr`; both std float types
/// print the shortest representation that parses back to the same bits.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal, saturating to infinity if out of range.
    #[inline]
    fn lit(value: f64) -> Self {
        Self::from_f64(value).unwrap_or_else(|| {
            if value.is_sign_negative() {
                Self::neg_infinity()
            } else {
                Self::infinity()
            }
        })
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn two() -> Self {
        Self::one() + Self::one()
    }

    #[inline]
    fn half() -> Self {
        Self::one() / Self::two()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
