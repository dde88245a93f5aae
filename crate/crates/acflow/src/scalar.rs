use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar the numerical core is generic over: f32 or f64.
///
/// Training-grade tolerances assume f64; f32 is supported for callers that
/// accept the reduced precision.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + num_traits::NumAssignOps
    + Sum<Self>
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn cast(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("f64 -> Real conversion")
    }

    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("Real -> f64 conversion")
    }

    /// ln(2π), the normalizing constant of the Gaussian log-density.
    fn ln_two_pi() -> Self {
        Self::cast(LN_TWO_PI)
    }
}

pub const LN_TWO_PI: f64 = 1.837877066409345339081937709124758839965870033;

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_two_pi_matches_std() {
        let direct = (2.0 * std::f64::consts::PI).ln();
        assert!((f64::ln_two_pi() - direct).abs() < 1e-15);
    }

    #[test]
    fn f32_round_trip() {
        let x = f32::cast(0.25);
        assert_eq!(x, 0.25f32);
        assert_eq!(x.as_f64(), 0.25f64);
    }
}
