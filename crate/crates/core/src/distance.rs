//! Ground-truth distance solvers for ellipse pairs.
//!
//! Two independent routes to the same quantity:
//!
//! * [`min_distance`] solves the primal closest-point problem by alternating
//!   projections between the two convex sets (each projection is a Newton
//!   solve on the Lagrange-multiplier scalar equation);
//! * [`maximize_clearance`] maximizes the supporting-line clearance over the
//!   line parameter by a coarse scan plus golden-section refinement.
//!
//! For disjoint ellipses the two agree (strong duality); the rest of the
//! crate leans on this module to certify the cheap clearance certificate.

use crate::geometry::{
    effective_shape, rotation, signed_clearance, AgentState, EllipseShape, SupportLineParam,
};
use crate::linalg::Vec2;
use crate::scalar::Real;

/// Outcome of the primal closest-point computation.
#[derive(Clone, Copy, Debug)]
pub struct DistanceResult<T> {
    /// Minimum distance between the two ellipses (0 when they intersect).
    pub w_star: T,
    /// Closest point on agent `i`.
    pub xi: Vec2<T>,
    /// Closest point on agent `j`.
    pub eta: Vec2<T>,
    /// Whether the alternating projections met the displacement tolerance.
    pub converged: bool,
    /// Alternating-projection iterations spent.
    pub iterations: usize,
}

/// Outcome of the clearance maximization over the line parameter.
#[derive(Clone, Copy, Debug)]
pub struct DualResult<T> {
    pub phi_star: SupportLineParam<T>,
    pub h_star: T,
}

const NEWTON_MAX_ITERS: usize = 200;
const ALTERNATING_MAX_ITERS: usize = 10_000;
const SCAN_SAMPLES: usize = 720;

/// Euclidean projection of `x` onto the (solid) posed ellipse.
///
/// Interior points project to themselves. Exterior points solve the
/// Karush-Kuhn-Tucker system in the body frame: the projection is
/// `y_k = u_k q_k^2 / (q_k^2 + t)` where `t > 0` is the root of the monotone
/// residual `F(t) = sum_k (u_k q_k / (q_k^2 + t))^2 - 1`. `F` is convex and
/// decreasing on the branch `t >= 0`, so Newton from `t = 0` converges
/// monotonically.
pub fn project_onto_ellipse<T: Real>(
    state: &AgentState<T>,
    shape: &EllipseShape<T>,
    x: Vec2<T>,
) -> Vec2<T> {
    let r = rotation(state.theta());
    // Body frame: u = R^T (x - p).
    let u = r.transpose() * (x - state.p);
    let (qa, qb) = (shape.q_major(), shape.q_minor());
    let inside = (u.x / qa) * (u.x / qa) + (u.y / qb) * (u.y / qb) <= T::one();
    if inside {
        return x;
    }

    let ca = (u.x * qa) * (u.x * qa);
    let cb = (u.y * qb) * (u.y * qb);
    let qa2 = qa * qa;
    let qb2 = qb * qb;
    let tol = T::tol(1e-13);

    let mut t = T::zero();
    for _ in 0..NEWTON_MAX_ITERS {
        let da = qa2 + t;
        let db = qb2 + t;
        let f = ca / (da * da) + cb / (db * db) - T::one();
        if f.abs() <= tol {
            break;
        }
        let two = T::of(2.0);
        let fp = -two * (ca / (da * da * da) + cb / (db * db * db));
        t = t - f / fp;
    }

    let y = Vec2::new(u.x * qa2 / (qa2 + t), u.y * qb2 / (qb2 + t));
    r * y + state.p
}

/// Minimum distance between two posed ellipses by alternating projections,
/// starting the iteration at `start` (any point; the center of agent `j` is
/// the conventional cold start).
///
/// Stops when one round trip moves the iterate by less than the displacement
/// tolerance or the iteration cap is hit; `converged` reports which.
pub fn min_distance_from<T: Real>(
    state_i: &AgentState<T>,
    shape_i: &EllipseShape<T>,
    state_j: &AgentState<T>,
    shape_j: &EllipseShape<T>,
    start: Vec2<T>,
) -> DistanceResult<T> {
    let step_tol = T::tol(1e-12);
    let mut eta = start;
    let mut xi = project_onto_ellipse(state_i, shape_i, eta);
    let mut converged = false;
    let mut iterations = 0;
    for k in 0..ALTERNATING_MAX_ITERS {
        iterations = k + 1;
        let eta_next = project_onto_ellipse(state_j, shape_j, xi);
        let xi_next = project_onto_ellipse(state_i, shape_i, eta_next);
        let step = (eta_next - eta).norm().max((xi_next - xi).norm());
        eta = eta_next;
        xi = xi_next;
        if step < step_tol {
            converged = true;
            break;
        }
    }
    DistanceResult {
        w_star: (eta - xi).norm(),
        xi,
        eta,
        converged,
        iterations,
    }
}

/// [`min_distance_from`] with the cold start at agent `j`'s center.
pub fn min_distance<T: Real>(
    state_i: &AgentState<T>,
    shape_i: &EllipseShape<T>,
    state_j: &AgentState<T>,
    shape_j: &EllipseShape<T>,
) -> DistanceResult<T> {
    min_distance_from(state_i, shape_i, state_j, shape_j, state_j.p)
}

/// Maximizes the signed clearance over the supporting-line parameter.
///
/// A 720-point scan over `(-pi, pi]` (plus `phi_init` as an extra candidate)
/// brackets every local maximum; each bracket is refined by golden-section
/// search until the interval is narrower than 1e-10 rad, and the best
/// refined value wins. The reported `h_star` is the clearance evaluated at
/// the reported `phi_star`.
pub fn maximize_clearance<T: Real>(
    state_i: &AgentState<T>,
    shape_i: &EllipseShape<T>,
    state_j: &AgentState<T>,
    shape_j: &EllipseShape<T>,
    phi_init: T,
) -> DualResult<T> {
    let h = |phi: T| {
        signed_clearance(
            state_i,
            shape_i,
            state_j,
            shape_j,
            &SupportLineParam::new(phi),
        )
    };

    let pi = T::PI();
    let step = (pi + pi) / T::of(SCAN_SAMPLES as f64);
    let mut values = [T::zero(); SCAN_SAMPLES];
    let mut angles = [T::zero(); SCAN_SAMPLES];
    for k in 0..SCAN_SAMPLES {
        let phi = -pi + step * T::of((k + 1) as f64);
        angles[k] = phi;
        values[k] = h(phi);
    }

    let mut best_phi = phi_init;
    let mut best_h = h(phi_init);

    // Refine around phi_init and around every cyclic local maximum of the scan.
    let mut consider = |center: T| {
        let (phi, val) = golden_section_max(&h, center - step, center + step, T::tol(1e-10));
        if val > best_h {
            best_h = val;
            best_phi = phi;
        }
    };
    consider(phi_init);
    for k in 0..SCAN_SAMPLES {
        let prev = values[(k + SCAN_SAMPLES - 1) % SCAN_SAMPLES];
        let next = values[(k + 1) % SCAN_SAMPLES];
        if values[k] >= prev && values[k] >= next {
            consider(angles[k]);
        }
    }

    let phi_star = SupportLineParam::new(best_phi);
    DualResult {
        phi_star,
        // Evaluate at the wrapped parameter so the pair is self-consistent.
        h_star: signed_clearance(state_i, shape_i, state_j, shape_j, &phi_star),
    }
}

/// Golden-section search for a maximum of `f` on `[lo, hi]`.
fn golden_section_max<T: Real, F: Fn(T) -> T>(f: &F, mut lo: T, mut hi: T, tol: T) -> (T, T) {
    let inv_phi = T::of(0.618_033_988_749_894_9);
    let mut x1 = hi - (hi - lo) * inv_phi;
    let mut x2 = lo + (hi - lo) * inv_phi;
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + (hi - lo) * inv_phi;
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - (hi - lo) * inv_phi;
            f1 = f(x1);
        }
    }
    let mid = (lo + hi) / T::of(2.0);
    (mid, f(mid))
}

/// Whether the two ellipses have no common point, decided by the sign of the
/// maximized clearance. Tangency counts as contact, not disjointness.
pub fn are_disjoint<T: Real>(
    state_i: &AgentState<T>,
    shape_i: &EllipseShape<T>,
    state_j: &AgentState<T>,
    shape_j: &EllipseShape<T>,
) -> bool {
    maximize_clearance(state_i, shape_i, state_j, shape_j, T::zero()).h_star > T::zero()
}

/// Clamped membership residual: how far outside the ellipse a point sits in
/// the quadratic-form metric, zero for members.
pub fn membership_residual<T: Real>(
    state: &AgentState<T>,
    shape: &EllipseShape<T>,
    x: Vec2<T>,
) -> T {
    let qi = effective_shape(state, shape).inverse();
    let y = qi * (x - state.p);
    (y.norm_squared() - T::one()).max(T::zero())
}
