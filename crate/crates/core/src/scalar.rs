//! Scalar abstraction for the numeric core.
//!
//! Everything numerical in this crate is generic over [`Real`], which is
//! `f32` or `f64`. Concrete `f64` aliases for the main domain types live at
//! the crate root.

use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar: nalgebra's real-field operations plus num-traits
/// conversions from/to `f64` for configuration constants and I/O.
pub trait Real:
    nalgebra::RealField + FromPrimitive + ToPrimitive + Copy + Default + std::iter::Sum
{
    /// Lift an `f64` constant into this scalar type.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant not representable")
    }

    /// Lower to `f64` for I/O and reporting.
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }

    /// Sentinel used for "no return" range-image bins.
    #[inline]
    fn no_return() -> Self {
        Self::of(f64::INFINITY)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Wrap an angle to `[0, 2π)`.
#[inline]
pub fn wrap_tau<T: Real>(angle: T) -> T {
    let tau = T::two_pi();
    let w = angle - tau * (angle / tau).floor();
    // floor rounding can land exactly on 2π for tiny negative inputs
    if w >= tau {
        w - tau
    } else if w < T::zero() {
        w + tau
    } else {
        w
    }
}

/// Wrap an angle to `[-π, π)`.
#[inline]
pub fn wrap_pi<T: Real>(angle: T) -> T {
    wrap_tau(angle + T::pi()) - T::pi()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_tau_range() {
        for &a in &[-10.0f64, -0.1, 0.0, 0.1, 6.3, 100.0, -1e-18] {
            let w = wrap_tau(a);
            assert!((0.0..std::f64::consts::TAU).contains(&w), "{a} -> {w}");
        }
        assert!((wrap_tau(2.0 * std::f64::consts::PI + 0.05) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn wrap_pi_range() {
        for &a in &[-10.0f64, -3.2, 3.2, 0.0, 7.0] {
            let w = wrap_pi(a);
            assert!((-std::f64::consts::PI..std::f64::consts::PI).contains(&w));
        }
        assert!((wrap_pi(3.0 * std::f64::consts::PI) - (-std::f64::consts::PI)).abs() < 1e-12);
    }

    #[test]
    fn works_for_f32() {
        let w: f32 = wrap_tau(7.0f32);
        assert!((w - (7.0 - std::f32::consts::TAU)).abs() < 1e-6);
    }
}
