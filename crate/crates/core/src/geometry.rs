//! Supporting-line geometry for elliptical agents.
//!
//! An agent occupies the ellipse `{x : (x - p)^T Qbar^-2 (x - p) <= 1}` where
//! `Qbar = R(theta) diag(q_major, q_minor) R(theta)^T`. A supporting line of
//! agent `i` touches its boundary at the point selected by an angle parameter
//! `phi`; the signed distance from that line to agent `j` is the clearance
//! certificate everything else in this crate is built on: it is positive
//! exactly when the line separates the two ellipses, and its maximum over
//! `phi` equals the true distance between the ellipses.
//!
//! This module evaluates the construction in closed form: boundary/deepest
//! points, the clearance itself, and all five partial derivatives needed by
//! the safety filter (with respect to both positions, both orientations, and
//! the line parameter).

use thiserror::Error;

use crate::linalg::{Mat2, Vec2};
use crate::scalar::{wrap_angle, Real};

/// Invalid semi-axis lengths.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ShapeError {
    #[error("semi-axes must be positive, got major={major}, minor={minor}")]
    NonPositive { major: f64, minor: f64 },
    #[error("major semi-axis must not be shorter than minor, got major={major}, minor={minor}")]
    MajorShorterThanMinor { major: f64, minor: f64 },
}

/// Semi-axis lengths of an agent's ellipse, major first.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EllipseShape<T> {
    q_major: T,
    q_minor: T,
}

impl<T: Real> EllipseShape<T> {
    pub fn new(q_major: T, q_minor: T) -> Result<Self, ShapeError> {
        if q_minor.is_nan() || q_major.is_nan() || q_minor <= T::zero() || q_major <= T::zero() {
            return Err(ShapeError::NonPositive {
                major: q_major.to_f64().unwrap_or(f64::NAN),
                minor: q_minor.to_f64().unwrap_or(f64::NAN),
            });
        }
        if q_major < q_minor {
            return Err(ShapeError::MajorShorterThanMinor {
                major: q_major.to_f64().unwrap_or(f64::NAN),
                minor: q_minor.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self { q_major, q_minor })
    }

    /// Circle of the given radius.
    pub fn circle(radius: T) -> Result<Self, ShapeError> {
        Self::new(radius, radius)
    }

    #[inline]
    pub fn q_major(&self) -> T {
        self.q_major
    }

    #[inline]
    pub fn q_minor(&self) -> T {
        self.q_minor
    }

    /// Axis matrix `diag(q_major, q_minor)` in the body frame.
    #[inline]
    pub fn axis_matrix(&self) -> Mat2<T> {
        Mat2::diagonal(self.q_major, self.q_minor)
    }
}

/// Planar pose of an agent: position plus heading.
///
/// The heading is kept wrapped to `(-pi, pi]` through every mutation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentState<T> {
    pub p: Vec2<T>,
    theta: T,
}

impl<T: Real> AgentState<T> {
    pub fn new(p: Vec2<T>, theta: T) -> Self {
        Self {
            p,
            theta: wrap_angle(theta),
        }
    }

    #[inline]
    pub fn theta(&self) -> T {
        self.theta
    }

    pub fn set_theta(&mut self, theta: T) {
        self.theta = wrap_angle(theta);
    }

    /// Euler step of the single-integrator dynamics; the heading is rewrapped.
    pub fn integrated(&self, velocity: Vec2<T>, angular_rate: T, dt: T) -> Self {
        Self::new(self.p + velocity * dt, self.theta + angular_rate * dt)
    }
}

/// Angle parameter selecting a supporting line on an ellipse boundary,
/// wrapped to `(-pi, pi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupportLineParam<T> {
    phi: T,
}

impl<T: Real> SupportLineParam<T> {
    pub fn new(phi: T) -> Self {
        Self {
            phi: wrap_angle(phi),
        }
    }

    #[inline]
    pub fn phi(&self) -> T {
        self.phi
    }

    /// Direction `v(phi) = [cos phi, sin phi]^T` on the unit circle.
    #[inline]
    pub fn direction(&self) -> Vec2<T> {
        Vec2::unit(self.phi)
    }

    pub fn advanced(&self, dphi: T) -> Self {
        Self::new(self.phi + dphi)
    }
}

/// World-frame shape matrix `Qbar = R Q R^T` of a posed ellipse.
///
/// Symmetric positive definite by construction; the off-diagonal entry is
/// computed once so symmetry is exact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveShape<T> {
    q_bar: Mat2<T>,
}

impl<T: Real> EffectiveShape<T> {
    #[inline]
    pub fn matrix(&self) -> Mat2<T> {
        self.q_bar
    }

    #[inline]
    pub fn inverse(&self) -> Mat2<T> {
        self.q_bar.inverse()
    }
}

/// Rotation matrix `R(theta)`, orthogonal with determinant +1.
pub fn rotation<T: Real>(theta: T) -> Mat2<T> {
    let (s, c) = theta.sin_cos();
    Mat2::new(c, -s, s, c)
}

/// World-frame shape matrix of the posed ellipse: `R(theta) Q R(theta)^T`.
pub fn effective_shape<T: Real>(
    state: &AgentState<T>,
    shape: &EllipseShape<T>,
) -> EffectiveShape<T> {
    let (s, c) = state.theta.sin_cos();
    let (qa, qb) = (shape.q_major, shape.q_minor);
    let off = (qa - qb) * c * s;
    let q_bar = Mat2::new(qa * c * c + qb * s * s, off, off, qa * s * s + qb * c * c);
    debug_assert!(q_bar.determinant() > T::zero());
    EffectiveShape { q_bar }
}

/// Membership test `(x - p)^T Qbar^-2 (x - p) <= 1`, boundary inclusive.
pub fn contains_point<T: Real>(state: &AgentState<T>, shape: &EllipseShape<T>, x: Vec2<T>) -> bool {
    ellipse_residual(state, shape, x) <= T::zero()
}

/// `(x - p)^T Qbar^-2 (x - p) - 1`; zero on the boundary, negative inside.
pub fn ellipse_residual<T: Real>(state: &AgentState<T>, shape: &EllipseShape<T>, x: Vec2<T>) -> T {
    let qi = effective_shape(state, shape).inverse();
    let y = qi * (x - state.p);
    y.norm_squared() - T::one()
}

/// Tangency point `m = Qbar v(phi) + p` of the supporting line on the
/// agent's boundary.
pub fn boundary_point<T: Real>(
    state: &AgentState<T>,
    shape: &EllipseShape<T>,
    line: &SupportLineParam<T>,
) -> Vec2<T> {
    effective_shape(state, shape).matrix() * line.direction() + state.p
}

/// Shared intermediates of the clearance formula for one agent pair.
struct PairFrame<T> {
    /// `Qbar_i^-1 v`
    a: Vec2<T>,
    /// `Qbar_j Qbar_i^-1 v`
    b: Vec2<T>,
    /// `p_j - p_i`
    d: Vec2<T>,
    a_norm: T,
    b_norm: T,
    q_i_inv: Mat2<T>,
    q_j: Mat2<T>,
}

impl<T: Real> PairFrame<T> {
    fn build(
        state_i: &AgentState<T>,
        shape_i: &EllipseShape<T>,
        state_j: &AgentState<T>,
        shape_j: &EllipseShape<T>,
        line: &SupportLineParam<T>,
    ) -> Self {
        let q_i_inv = effective_shape(state_i, shape_i).inverse();
        let q_j = effective_shape(state_j, shape_j).matrix();
        let v = line.direction();
        let a = q_i_inv * v;
        let b = q_j * a;
        let a_norm = a.norm();
        let b_norm = b.norm();
        // Positive definiteness of Qbar_i and |v| = 1 rule out a vanishing
        // denominator in the clearance formula.
        debug_assert!(a_norm > T::zero() && b_norm > T::zero());
        Self {
            a,
            b,
            d: state_j.p - state_i.p,
            a_norm,
            b_norm,
            q_i_inv,
            q_j,
        }
    }

    #[inline]
    fn numerator(&self) -> T {
        -self.b_norm + self.d.dot(self.a) - T::one()
    }

    #[inline]
    fn clearance(&self) -> T {
        self.numerator() / self.a_norm
    }
}

/// Point of agent `j` with minimum signed distance from agent `i`'s
/// supporting line: `n = -Qbar_j^2 Qbar_i^-1 v / |Qbar_j Qbar_i^-1 v| + p_j`.
pub fn deepest_point<T: Real>(
    state_i: &AgentState<T>,
    shape_i: &EllipseShape<T>,
    state_j: &AgentState<T>,
    shape_j: &EllipseShape<T>,
    line: &SupportLineParam<T>,
) -> Vec2<T> {
    let f = PairFrame::build(state_i, shape_i, state_j, shape_j, line);
    state_j.p - (f.q_j * f.b) / f.b_norm
}

/// Minimum signed distance from agent `i`'s supporting line to agent `j`:
///
/// `h = ( -|Qbar_j Qbar_i^-1 v| + (p_j - p_i)^T Qbar_i^-1 v - 1 ) / |Qbar_i^-1 v|`
///
/// Positive exactly when the line separates the two ellipses.
pub fn signed_clearance<T: Real>(
    state_i: &AgentState<T>,
    shape_i: &EllipseShape<T>,
    state_j: &AgentState<T>,
    shape_j: &EllipseShape<T>,
    line: &SupportLineParam<T>,
) -> T {
    PairFrame::build(state_i, shape_i, state_j, shape_j, line).clearance()
}

/// All five partial derivatives of [`signed_clearance`].
///
/// The position gradients have unit norm and are exact negatives of each
/// other; both facts are structural (the shared direction is computed once).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClearanceGradient<T> {
    pub d_p_i: Vec2<T>,
    pub d_theta_i: T,
    pub d_p_j: Vec2<T>,
    pub d_theta_j: T,
    pub d_phi: T,
}

/// Analytic gradient of the signed clearance with respect to
/// `(p_i, theta_i, p_j, theta_j, phi)`.
///
/// The position blocks are `-+ Qbar_i^-1 v / |Qbar_i^-1 v|`. The angular
/// derivatives chain through `d(Qbar)/d(theta) = S Qbar - Qbar S` (with `S`
/// the quarter-turn generator) and `dv/dphi = [-sin, cos]^T`.
pub fn clearance_gradient<T: Real>(
    state_i: &AgentState<T>,
    shape_i: &EllipseShape<T>,
    state_j: &AgentState<T>,
    shape_j: &EllipseShape<T>,
    line: &SupportLineParam<T>,
) -> ClearanceGradient<T> {
    let f = PairFrame::build(state_i, shape_i, state_j, shape_j, line);
    let num = f.numerator();
    let den = f.a_norm;

    let d_p_j = f.a / den;
    let d_p_i = -d_p_j;

    // Directional derivative of h for a perturbation (da, db) of the
    // intermediates a = Qbar_i^-1 v and b = Qbar_j a.
    let quotient_rule = |da: Vec2<T>, db: Vec2<T>| -> T {
        let d_num = -f.b.dot(db) / f.b_norm + f.d.dot(da);
        let d_den = f.a.dot(da) / f.a_norm;
        (d_num * den - num * d_den) / (den * den)
    };

    // phi: v' = perp(v), a' = Qbar_i^-1 v', b' = Qbar_j a'.
    let v_perp = line.direction().perp();
    let a_phi = f.q_i_inv * v_perp;
    let d_phi = quotient_rule(a_phi, f.q_j * a_phi);

    // theta_i: d(Qbar_i^-1)/dtheta = S Qbar_i^-1 - Qbar_i^-1 S, so
    // da = perp(a) - Qbar_i^-1 perp(v).
    let a_ti = f.a.perp() - a_phi;
    let d_theta_i = quotient_rule(a_ti, f.q_j * a_ti);

    // theta_j: only b moves, db = (S Qbar_j - Qbar_j S) a.
    let b_tj = (f.q_j * f.a).perp() - f.q_j * f.a.perp();
    let d_theta_j = -f.b.dot(b_tj) / (f.b_norm * den);

    ClearanceGradient {
        d_p_i,
        d_theta_i,
        d_p_j,
        d_theta_j,
        d_phi,
    }
}
