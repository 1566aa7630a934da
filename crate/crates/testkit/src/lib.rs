//! Independent oracles and deterministic samplers used by the test suites.
//!
//! Everything here deliberately avoids the closed forms under test: distances
//! come from dense boundary grids, gradients from central differences, and QP
//! solutions from exhaustive active-set enumeration with Gaussian
//! elimination. This crate is a dev-dependency only; nothing ships with it.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ellipse_cbf::distance::{min_distance, DistanceResult};
use ellipse_cbf::geometry::{
    effective_shape, signed_clearance, AgentState, ClearanceGradient, EllipseShape,
    SupportLineParam,
};
use ellipse_cbf::qp::ConstraintRow;
use ellipse_cbf::Vec2;

/// Seeded deterministic random source for test data.
pub struct TestRng(ChaCha8Rng);

impl TestRng {
    pub fn seeded(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn angle(&mut self) -> f64 {
        self.range(-std::f64::consts::PI, std::f64::consts::PI)
    }
}

/// Random shape with semi-axes in `[0.1, 1]`.
pub fn random_shape(rng: &mut TestRng) -> EllipseShape<f64> {
    let a = rng.range(0.1, 1.0);
    let b = rng.range(0.1, 1.0);
    EllipseShape::new(a.max(b), a.min(b)).unwrap()
}

/// Random pose with the center in `[-span, span]^2`.
pub fn random_state(rng: &mut TestRng, span: f64) -> AgentState<f64> {
    AgentState::new(
        Vec2::new(rng.range(-span, span), rng.range(-span, span)),
        rng.angle(),
    )
}

/// One agent-pair configuration (any separation).
pub type PairConfig = (
    AgentState<f64>,
    EllipseShape<f64>,
    AgentState<f64>,
    EllipseShape<f64>,
);

pub fn random_pair(rng: &mut TestRng) -> PairConfig {
    (
        random_state(rng, 3.0),
        random_shape(rng),
        random_state(rng, 3.0),
        random_shape(rng),
    )
}

/// Rejection-samples a pair that is comfortably disjoint (primal distance at
/// least `margin`, converged), returning the primal result alongside.
pub fn random_disjoint_pair(rng: &mut TestRng, margin: f64) -> (PairConfig, DistanceResult<f64>) {
    loop {
        let cfg = random_pair(rng);
        let d = min_distance(&cfg.0, &cfg.1, &cfg.2, &cfg.3);
        if d.converged && d.w_star >= margin {
            return (cfg, d);
        }
    }
}

/// Mixed relative/absolute error used by the gradient checks: relative for
/// magnitudes above one, absolute below.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Central finite differences of the signed clearance (step 1e-6) in all
/// seven coordinates, independent of the analytic chain rule.
pub fn fd_clearance_gradient(
    cfg: &PairConfig,
    line: &SupportLineParam<f64>,
) -> ClearanceGradient<f64> {
    const STEP: f64 = 1e-6;
    let (si, qi, sj, qj) = cfg;
    let eval = |dpix: f64, dpiy: f64, dti: f64, dpjx: f64, dpjy: f64, dtj: f64, dphi: f64| {
        signed_clearance(
            &AgentState::new(si.p + Vec2::new(dpix, dpiy), si.theta() + dti),
            qi,
            &AgentState::new(sj.p + Vec2::new(dpjx, dpjy), sj.theta() + dtj),
            qj,
            &SupportLineParam::new(line.phi() + dphi),
        )
    };
    let central = |plus: f64, minus: f64| (plus - minus) / (2.0 * STEP);
    ClearanceGradient {
        d_p_i: Vec2::new(
            central(
                eval(STEP, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
                eval(-STEP, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
            ),
            central(
                eval(0.0, STEP, 0.0, 0.0, 0.0, 0.0, 0.0),
                eval(0.0, -STEP, 0.0, 0.0, 0.0, 0.0, 0.0),
            ),
        ),
        d_theta_i: central(
            eval(0.0, 0.0, STEP, 0.0, 0.0, 0.0, 0.0),
            eval(0.0, 0.0, -STEP, 0.0, 0.0, 0.0, 0.0),
        ),
        d_p_j: Vec2::new(
            central(
                eval(0.0, 0.0, 0.0, STEP, 0.0, 0.0, 0.0),
                eval(0.0, 0.0, 0.0, -STEP, 0.0, 0.0, 0.0),
            ),
            central(
                eval(0.0, 0.0, 0.0, 0.0, STEP, 0.0, 0.0),
                eval(0.0, 0.0, 0.0, 0.0, -STEP, 0.0, 0.0),
            ),
        ),
        d_theta_j: central(
            eval(0.0, 0.0, 0.0, 0.0, 0.0, STEP, 0.0),
            eval(0.0, 0.0, 0.0, 0.0, 0.0, -STEP, 0.0),
        ),
        d_phi: central(
            eval(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, STEP),
            eval(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -STEP),
        ),
    }
}

/// Boundary point of a posed ellipse at parameter angle `alpha`.
pub fn boundary_at(state: &AgentState<f64>, shape: &EllipseShape<f64>, alpha: f64) -> Vec2<f64> {
    effective_shape(state, shape).matrix() * Vec2::unit(alpha) + state.p
}

/// Signed distance of a point from the supporting line, evaluated straight
/// from the line equation (normal `Qbar_i^-1 v`, offset through the tangency
/// point) rather than through the clearance formula.
pub fn signed_line_distance(
    state_i: &AgentState<f64>,
    shape_i: &EllipseShape<f64>,
    line: &SupportLineParam<f64>,
    x: Vec2<f64>,
) -> f64 {
    let normal = effective_shape(state_i, shape_i).inverse() * line.direction();
    (normal.dot(x) - (1.0 + normal.dot(state_i.p))) / normal.norm()
}

/// Brute-force minimum distance between two ellipses: an `n x n` grid over
/// both boundary parameter angles followed by coordinate-wise golden-section
/// refinement around the best cell. Only meaningful for disjoint pairs.
pub fn grid_min_distance(cfg: &PairConfig, n: usize) -> f64 {
    let (si, qi, sj, qj) = cfg;
    let tau = 2.0 * std::f64::consts::PI;
    let pts_i: Vec<Vec2<f64>> = (0..n)
        .map(|k| boundary_at(si, qi, tau * k as f64 / n as f64))
        .collect();
    let pts_j: Vec<Vec2<f64>> = (0..n)
        .map(|k| boundary_at(sj, qj, tau * k as f64 / n as f64))
        .collect();

    let mut best = f64::INFINITY;
    let mut best_ij = (0usize, 0usize);
    for (i, pi) in pts_i.iter().enumerate() {
        for (j, pj) in pts_j.iter().enumerate() {
            let d2 = (*pi - *pj).norm_squared();
            if d2 < best {
                best = d2;
                best_ij = (i, j);
            }
        }
    }

    let dist =
        |alpha: f64, beta: f64| (boundary_at(si, qi, alpha) - boundary_at(sj, qj, beta)).norm();
    let mut alpha = tau * best_ij.0 as f64 / n as f64;
    let mut beta = tau * best_ij.1 as f64 / n as f64;
    let width = tau / n as f64;
    for _ in 0..6 {
        alpha = golden_min(|a| dist(a, beta), alpha - width, alpha + width);
        beta = golden_min(|b| dist(alpha, b), beta - width, beta + width);
    }
    dist(alpha, beta)
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = 0.618_033_988_749_894_9;
    let mut x1 = hi - (hi - lo) * inv_phi;
    let mut x2 = lo + (hi - lo) * inv_phi;
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > 1e-12 {
        if f1 > f2 {
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
    0.5 * (lo + hi)
}

/// Exhaustive active-set enumeration for the least-deviation QP: tries every
/// subset of rows as the active set, solves the equality-constrained
/// candidate by Gaussian elimination, keeps Karush-Kuhn-Tucker-valid
/// candidates, and returns the best. `None` when no subset validates
/// (infeasible or fully degenerate input).
pub fn qp_enumeration_oracle(u_nom: &[f64], rows: &[ConstraintRow<f64>]) -> Option<Vec<f64>> {
    let dim = u_nom.len();
    let m = rows.len();
    assert!(
        m <= 16,
        "enumeration oracle is exponential in the row count"
    );
    let dense: Vec<Vec<f64>> = rows.iter().map(|r| r.dense(dim)).collect();

    let feasible = |u: &[f64]| rows.iter().all(|r| r.value_at(u) >= -1e-9);
    let objective =
        |u: &[f64]| -> f64 { u.iter().zip(u_nom).map(|(a, b)| (a - b) * (a - b)).sum() };

    let mut best: Option<(f64, Vec<f64>)> = None;
    'subsets: for mask in 0u32..(1 << m) {
        let subset: Vec<usize> = (0..m).filter(|r| mask & (1 << r) != 0).collect();
        let k = subset.len();
        if k > dim {
            continue;
        }
        let u = if k == 0 {
            u_nom.to_vec()
        } else {
            // Solve (A_S A_S^T) lambda = -(A_S u_nom + b_S), u = u_nom + A_S^T lambda.
            let mut gram = vec![vec![0.0; k]; k];
            let mut rhs = vec![0.0; k];
            for (a, &ra) in subset.iter().enumerate() {
                for (b, &rb) in subset.iter().enumerate() {
                    gram[a][b] = dense[ra].iter().zip(&dense[rb]).map(|(x, y)| x * y).sum();
                }
                rhs[a] = -rows[ra].value_at(u_nom);
            }
            let Some(lambda) = gaussian_solve(gram, rhs) else {
                continue 'subsets; // singular subset
            };
            // Multipliers of an optimal active set must be nonnegative.
            if lambda.iter().any(|&l| l < -1e-9) {
                continue 'subsets;
            }
            let mut u = u_nom.to_vec();
            for (a, &ra) in subset.iter().enumerate() {
                for i in 0..dim {
                    u[i] += dense[ra][i] * lambda[a];
                }
            }
            u
        };
        if !feasible(&u) {
            continue;
        }
        let obj = objective(&u);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, u));
        }
    }
    best.map(|(_, u)| u)
}

/// Dense Gaussian elimination with partial pivoting; `None` on singularity.
pub fn gaussian_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot =
            (col..n).max_by(|&r1, &r2| a[r1][col].abs().partial_cmp(&a[r2][col].abs()).unwrap())?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            let (head, tail) = a.split_at_mut(row);
            for (x, y) in tail[0].iter_mut().zip(&head[col]).skip(col) {
                *x -= f * *y;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for c in (row + 1)..n {
            s -= a[row][c] * x[c];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Karush-Kuhn-Tucker residuals of a candidate QP solution: stationarity
/// (with multipliers fitted on the active rows), worst primal infeasibility,
/// and worst complementarity product.
pub struct KktReport {
    pub stationarity: f64,
    pub worst_infeasibility: f64,
    pub worst_complementarity: f64,
    pub min_multiplier: f64,
}

pub fn kkt_residuals(u_nom: &[f64], rows: &[ConstraintRow<f64>], u: &[f64]) -> KktReport {
    let dim = u_nom.len();
    let active: Vec<usize> = (0..rows.len())
        .filter(|&r| rows[r].value_at(u).abs() <= 1e-7)
        .collect();
    let dense: Vec<Vec<f64>> = active.iter().map(|&r| rows[r].dense(dim)).collect();
    let resid: Vec<f64> = u.iter().zip(u_nom).map(|(a, b)| a - b).collect();

    let k = active.len();
    let lambda = if k == 0 {
        Vec::new()
    } else {
        let mut gram = vec![vec![0.0; k]; k];
        let mut rhs = vec![0.0; k];
        for a in 0..k {
            for b in 0..k {
                gram[a][b] = dense[a].iter().zip(&dense[b]).map(|(x, y)| x * y).sum();
            }
            rhs[a] = dense[a].iter().zip(&resid).map(|(x, y)| x * y).sum();
        }
        gaussian_solve(gram, rhs).unwrap_or_else(|| vec![0.0; k])
    };

    let mut stat = vec![0.0; dim];
    stat.copy_from_slice(&resid);
    for (a, &_r) in active.iter().enumerate() {
        for i in 0..dim {
            stat[i] -= dense[a][i] * lambda[a];
        }
    }
    let stationarity = stat.iter().map(|x| x * x).sum::<f64>().sqrt();
    let worst_infeasibility = rows.iter().map(|r| -r.value_at(u)).fold(0.0f64, f64::max);
    let worst_complementarity = active
        .iter()
        .enumerate()
        .map(|(a, &r)| (lambda[a] * rows[r].value_at(u)).abs())
        .fold(0.0f64, f64::max);
    let min_multiplier = lambda.iter().copied().fold(0.0f64, f64::min);
    KktReport {
        stationarity,
        worst_infeasibility,
        worst_complementarity,
        min_multiplier,
    }
}
