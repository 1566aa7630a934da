//! Scalar abstraction: everything numeric in this crate is generic over [`Real`],
//! which is implemented for `f32` and `f64`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating-point scalar used throughout the geometry, solvers, and simulator.
pub trait Real:
    Float + FloatConst + FromPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal not representable in this scalar type")
    }

    /// Converts a solver tolerance stated for `f64` into one meaningful for
    /// `Self`: never tighter than a few machine epsilons of the actual type.
    #[inline]
    fn tol(spec: f64) -> Self {
        Self::of(spec).max(Self::epsilon() * Self::of(64.0))
    }
}

impl<T> Real for T where
    T: Float + FloatConst + FromPrimitive + Debug + Display + Send + Sync + 'static
{
}

/// Wraps an angle into the interval `(-pi, pi]`.
///
/// Values already inside the interval are returned bit-identically, so the
/// function is idempotent.
pub fn wrap_angle<T: Real>(x: T) -> T {
    let pi = T::PI();
    if x > -pi && x <= pi {
        return x;
    }
    let two_pi = pi + pi;
    let mut r = x % two_pi;
    if r <= -pi {
        r = r + two_pi;
    } else if r > pi {
        r = r - two_pi;
    }
    // r + two_pi can round to exactly -pi when r sits half an ulp above -two_pi + pi.
    if r == -pi {
        r = pi;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn wrap_in_range_is_identity() {
        for &x in &[0.0, 1.0, -1.0, PI, -PI + 1e-15, 3.0, -3.0] {
            assert_eq!(wrap_angle(x), x, "in-range value must pass through");
        }
    }

    #[test]
    fn wrap_boundaries() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert!((wrap_angle(-3.0 * PI / 2.0) - PI / 2.0).abs() < 1e-15);
        assert!(wrap_angle(2.0 * PI).abs() < 1e-15);
        assert!((wrap_angle(5.0 * PI) - PI).abs() < 1e-14);
    }

    #[test]
    fn wrap_is_idempotent() {
        for k in -100..100 {
            let x = 0.137 * k as f64;
            let w = wrap_angle(x);
            assert_eq!(wrap_angle(w), w);
            assert!(w > -PI && w <= PI, "wrapped {x} -> {w} out of range");
        }
    }

    #[test]
    fn wrap_works_for_f32() {
        let w = wrap_angle(7.0f32);
        assert!(w > -std::f32::consts::PI && w <= std::f32::consts::PI);
        assert!((w - (7.0 - 2.0 * std::f32::consts::PI)).abs() < 1e-6);
    }
}
