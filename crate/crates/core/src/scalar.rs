//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the tracker is generic over: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Every value the crate feeds through here is
    /// representable in both supported widths.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    #[inline]
    fn deg(v: f64) -> Self {
        Self::lit(v.to_radians())
    }

    #[inline]
    fn to_deg(self) -> Self {
        self.to_degrees()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Decimal rendering that round-trips bit-exactly through `str::parse`
/// (17 significant digits).
pub fn exact_decimal<T: Real>(v: T) -> String {
    format!("{:.16e}", v.as_f64())
}
