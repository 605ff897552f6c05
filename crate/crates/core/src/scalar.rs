//! Scalar abstraction shared by every numerical kernel in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real floating-point scalar: `f32` or `f64`.
///
/// `tolerance` is the default absolute threshold used by internal consistency
/// checks (e.g. the solvability of the skew-part system). It is loose enough for
/// rounding in the given precision and tight enough to catch a real defect.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    fn tolerance() -> Self;

    /// Converts an `f64` literal; never fails for the implemented types.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }
}

impl Real for f32 {
    fn tolerance() -> Self {
        2e-3
    }
}

impl Real for f64 {
    fn tolerance() -> Self {
        1e-10
    }
}
