//! Scalar abstraction for the numeric core.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the numeric modules are generic over: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough constant injection; panics only if the target type
    /// cannot represent any finite `f64`, which `f32`/`f64` always can.
    fn c(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 constant must convert")
    }

    /// Count-to-scalar conversion for means and normalisations.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("usize count must convert")
    }

    /// Back to `f64` for reporting and serialization.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("float scalar converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_injection_round_trips() {
        assert_eq!(f64::c(0.04045), 0.04045);
        assert_eq!(f32::c(0.5), 0.5f32);
        assert_eq!(f64::from_count(128), 128.0);
    }
}
