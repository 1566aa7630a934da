//! Minimal 2-D vector/matrix arithmetic.
//!
//! Everything the crate needs fits in closed form at dimension two, so the
//! types are hand-rolled: inverses go through the adjugate, no factorizations.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::scalar::Real;

/// Column vector in the plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Vec2<T> {
    #[inline]
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    /// Unit vector at the given angle from the x-axis.
    #[inline]
    pub fn unit(angle: T) -> Self {
        Self::new(angle.cos(), angle.sin())
    }

    #[inline]
    pub fn dot(self, rhs: Self) -> T {
        self.x * rhs.x + self.y * rhs.y
    }

    #[inline]
    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.norm_squared().sqrt()
    }

    /// Counterclockwise quarter-turn of the vector.
    #[inline]
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    #[inline]
    pub fn scaled(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s)
    }
}

impl<T: Real> Add for Vec2<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl<T: Real> Sub for Vec2<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl<T: Real> Neg for Vec2<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

impl<T: Real> Mul<T> for Vec2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        self.scaled(s)
    }
}

impl<T: Real> Div<T> for Vec2<T> {
    type Output = Self;
    #[inline]
    fn div(self, s: T) -> Self {
        Self::new(self.x / s, self.y / s)
    }
}

/// Row-major 2x2 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2<T> {
    pub m00: T,
    pub m01: T,
    pub m10: T,
    pub m11: T,
}

impl<T: Real> Mat2<T> {
    #[inline]
    pub fn new(m00: T, m01: T, m10: T, m11: T) -> Self {
        Self { m00, m01, m10, m11 }
    }

    #[inline]
    pub fn identity() -> Self {
        Self::new(T::one(), T::zero(), T::zero(), T::one())
    }

    #[inline]
    pub fn diagonal(d0: T, d1: T) -> Self {
        Self::new(d0, T::zero(), T::zero(), d1)
    }

    #[inline]
    pub fn transpose(self) -> Self {
        Self::new(self.m00, self.m10, self.m01, self.m11)
    }

    #[inline]
    pub fn determinant(self) -> T {
        self.m00 * self.m11 - self.m01 * self.m10
    }

    /// Adjugate inverse. Callers only invert positive-definite matrices
    /// (effective shapes), so a vanishing determinant is a logic error.
    #[inline]
    pub fn inverse(self) -> Self {
        let det = self.determinant();
        debug_assert!(det != T::zero(), "singular 2x2 matrix");
        Self::new(
            self.m11 / det,
            -self.m01 / det,
            -self.m10 / det,
            self.m00 / det,
        )
    }

    #[inline]
    pub fn is_symmetric(self, rel_tol: T) -> bool {
        let scale = self
            .m00
            .abs()
            .max(self.m01.abs())
            .max(self.m10.abs())
            .max(self.m11.abs());
        (self.m01 - self.m10).abs() <= rel_tol * scale.max(T::one())
    }
}

impl<T: Real> Mul<Vec2<T>> for Mat2<T> {
    type Output = Vec2<T>;
    #[inline]
    fn mul(self, v: Vec2<T>) -> Vec2<T> {
        Vec2::new(
            self.m00 * v.x + self.m01 * v.y,
            self.m10 * v.x + self.m11 * v.y,
        )
    }
}

impl<T: Real> Mul for Mat2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, r: Self) -> Self {
        Self::new(
            self.m00 * r.m00 + self.m01 * r.m10,
            self.m00 * r.m01 + self.m01 * r.m11,
            self.m10 * r.m00 + self.m11 * r.m10,
            self.m10 * r.m01 + self.m11 * r.m11,
        )
    }
}

impl<T: Real> Sub for Mat2<T> {
    type Output = Self;
    #[inline]
    fn sub(self, r: Self) -> Self {
        Self::new(
            self.m00 - r.m00,
            self.m01 - r.m01,
            self.m10 - r.m10,
            self.m11 - r.m11,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_diagonal() {
        let m: Mat2<f64> = Mat2::diagonal(2.0, 4.0);
        let inv = m.inverse();
        assert_eq!(inv, Mat2::diagonal(0.5, 0.25));
    }

    #[test]
    fn inverse_roundtrip() {
        let m: Mat2<f64> = Mat2::new(1.3, 0.4, 0.4, 2.1);
        let p = m * m.inverse();
        assert!((p.m00 - 1.0).abs() < 1e-14);
        assert!((p.m11 - 1.0).abs() < 1e-14);
        assert!(p.m01.abs() < 1e-14);
        assert!(p.m10.abs() < 1e-14);
    }

    #[test]
    fn perp_is_quarter_turn() {
        let v: Vec2<f64> = Vec2::new(1.0, 0.0);
        assert_eq!(v.perp(), Vec2::new(0.0, 1.0));
        assert_eq!(v.perp().perp(), -v);
    }
}
