//! Minimally invasive quadratic program:
//!
//! ```text
//!     minimize   |u - u_nom|^2
//!     subject to a_r . u + b_r >= 0   for every constraint row r
//! ```
//!
//! Solved by a primal active-set method. The Hessian is the identity, so
//! every working-set subproblem is a Euclidean projection onto the null
//! space of the active rows, computed through a Householder QR of the
//! active-constraint matrix (no normal-equation Cholesky). Problem sizes
//! here are tiny: dimension `3n + n(n-1)/2` with at most `n(n-1)/2` rows.

use thiserror::Error;

use crate::scalar::Real;

/// One linear inequality `coeffs . u + rhs_alpha >= 0`, sparse over the
/// decision vector.
#[derive(Clone, Debug)]
pub struct ConstraintRow<T> {
    /// `(index, coefficient)` pairs; indices must be unique and in range.
    pub coeffs: Vec<(usize, T)>,
    /// Constant offset (the class-K term `alpha(h)` in barrier rows).
    pub rhs_alpha: T,
}

impl<T: Real> ConstraintRow<T> {
    /// Dense copy of the coefficient vector.
    pub fn dense(&self, dim: usize) -> Vec<T> {
        let mut a = vec![T::zero(); dim];
        for &(idx, c) in &self.coeffs {
            a[idx] = c;
        }
        a
    }

    /// Constraint value `coeffs . u + rhs_alpha` at a point.
    pub fn value_at(&self, u: &[T]) -> T {
        let mut s = self.rhs_alpha;
        for &(idx, c) in &self.coeffs {
            s = s + c * u[idx];
        }
        s
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum QpError {
    #[error("constraint row {row} references index {index} outside dimension {dim}")]
    IndexOutOfRange {
        row: usize,
        index: usize,
        dim: usize,
    },
    #[error("non-finite value in QP input (row {row})")]
    NonFinite { row: usize },
    #[error("constraint set is infeasible")]
    Infeasible,
    #[error("active-set iteration limit reached")]
    IterationLimit,
}

/// Solution with diagnostics.
#[derive(Clone, Debug)]
pub struct QpSolution<T> {
    pub u: Vec<T>,
    /// Rows active (tight) at the solution.
    pub active: Vec<usize>,
    pub iterations: usize,
}

/// Solves the least-deviation QP; returns only the decision vector.
pub fn solve_qp<T: Real>(u_nom: &[T], rows: &[ConstraintRow<T>]) -> Result<Vec<T>, QpError> {
    solve_qp_full(u_nom, rows).map(|s| s.u)
}

/// Solves the least-deviation QP with active-set diagnostics.
pub fn solve_qp_full<T: Real>(
    u_nom: &[T],
    rows: &[ConstraintRow<T>],
) -> Result<QpSolution<T>, QpError> {
    let dim = u_nom.len();
    for (r, row) in rows.iter().enumerate() {
        if !row.rhs_alpha.is_finite() {
            return Err(QpError::NonFinite { row: r });
        }
        for &(idx, c) in &row.coeffs {
            if idx >= dim {
                return Err(QpError::IndexOutOfRange {
                    row: r,
                    index: idx,
                    dim,
                });
            }
            if !c.is_finite() {
                return Err(QpError::NonFinite { row: r });
            }
        }
    }

    let act_tol = T::tol(1e-10);

    // Unconstrained optimum already feasible: return it untouched.
    if rows.iter().all(|row| row.value_at(u_nom) >= -act_tol) {
        return Ok(QpSolution {
            u: u_nom.to_vec(),
            active: active_rows(u_nom, rows, act_tol),
            iterations: 0,
        });
    }

    let dense: Vec<Vec<T>> = rows.iter().map(|r| r.dense(dim)).collect();
    let mut u = phase_one(u_nom, rows, &dense, act_tol)?;

    // Working set: rows tight at the current iterate.
    let mut working: Vec<usize> = (0..rows.len())
        .filter(|&r| rows[r].value_at(&u).abs() <= act_tol)
        .collect();

    let max_iters = 50 * (rows.len() + 2);
    let step_tol = T::tol(1e-12);
    for iter in 0..max_iters {
        let mut g: Vec<T> = u_nom.iter().zip(&u).map(|(&n, &x)| n - x).collect();

        let qr = if working.is_empty() {
            None
        } else {
            Some(ThinQr::factor(
                &working
                    .iter()
                    .map(|&r| dense[r].clone())
                    .collect::<Vec<_>>(),
                act_tol,
            ))
        };

        // Step direction: projection of (u_nom - u) onto the active null space.
        if let Some(qr) = &qr {
            let range_part = qr.project_onto_range(&g);
            for i in 0..dim {
                g[i] = g[i] - range_part[i];
            }
        }
        let p_norm = g.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt();

        if p_norm <= step_tol {
            // Stationary on the working set: check multipliers.
            let Some(qr) = &qr else {
                return Ok(QpSolution {
                    u,
                    active: working,
                    iterations: iter,
                });
            };
            let resid: Vec<T> = u.iter().zip(u_nom).map(|(&x, &n)| x - n).collect();
            let lambda = qr.least_squares(&resid);
            let mut worst = T::zero();
            let mut worst_pos = None;
            for (k, &l) in lambda.iter().enumerate() {
                if l < worst {
                    worst = l;
                    worst_pos = Some(k);
                }
            }
            match worst_pos {
                Some(k) if worst < -act_tol => {
                    working.remove(qr.kept[k]);
                }
                _ => {
                    return Ok(QpSolution {
                        u,
                        active: working,
                        iterations: iter,
                    });
                }
            }
        } else {
            // Longest feasible step along p, blocked by inactive rows.
            let mut alpha = T::one();
            let mut blocker = None;
            for r in 0..rows.len() {
                if working.contains(&r) {
                    continue;
                }
                let dir = dense[r]
                    .iter()
                    .zip(&g)
                    .fold(T::zero(), |acc, (&a, &p)| acc + a * p);
                if dir < -step_tol {
                    let slack = rows[r].value_at(&u).max(T::zero());
                    let limit = slack / -dir;
                    if limit < alpha {
                        alpha = limit;
                        blocker = Some(r);
                    }
                }
            }
            for i in 0..dim {
                u[i] = u[i] + g[i] * alpha;
            }
            if let Some(r) = blocker {
                working.push(r);
            }
        }
    }
    Err(QpError::IterationLimit)
}

fn active_rows<T: Real>(u: &[T], rows: &[ConstraintRow<T>], tol: T) -> Vec<usize> {
    (0..rows.len())
        .filter(|&r| rows[r].value_at(u).abs() <= tol)
        .collect()
}

/// Feasible starting point: the minimum-norm correction that lifts every
/// violated row onto its boundary while leaving satisfied rows at their
/// current values. Falls back to cyclic halfspace projections if the
/// constraint matrix is rank deficient.
fn phase_one<T: Real>(
    u_nom: &[T],
    rows: &[ConstraintRow<T>],
    dense: &[Vec<T>],
    act_tol: T,
) -> Result<Vec<T>, QpError> {
    let dim = u_nom.len();
    let qr = ThinQr::factor(dense, act_tol);
    let rhs: Vec<T> = rows
        .iter()
        .map(|row| {
            let s = row.value_at(u_nom);
            if s < T::zero() {
                -s
            } else {
                T::zero()
            }
        })
        .collect();
    let mut u = u_nom.to_vec();
    if qr.kept.len() == dense.len() {
        let delta = qr.min_norm_solution(&rhs);
        for i in 0..dim {
            u[i] = u[i] + delta[i];
        }
    }
    if rows.iter().all(|row| row.value_at(&u) >= -act_tol) {
        return Ok(u);
    }

    // Rank-deficient or numerically awkward: relax with projections onto
    // violated halfspaces.
    for _ in 0..100_000 {
        let mut worst = -act_tol;
        let mut worst_row = None;
        for (r, row) in rows.iter().enumerate() {
            let s = row.value_at(&u);
            if s < worst {
                worst = s;
                worst_row = Some(r);
            }
        }
        let Some(r) = worst_row else {
            return Ok(u);
        };
        let a = &dense[r];
        let nsq = a.iter().fold(T::zero(), |acc, &x| acc + x * x);
        if nsq <= T::zero() {
            return Err(QpError::Infeasible);
        }
        let s = rows[r].value_at(&u);
        let scale = -s / nsq;
        for i in 0..dim {
            u[i] = u[i] + a[i] * scale;
        }
    }
    Err(QpError::Infeasible)
}

/// Thin Householder QR of a `dim x k` matrix given by columns, dropping
/// columns that are linearly dependent on their predecessors.
struct ThinQr<T> {
    /// Householder vectors (unit scale handled via stored beta).
    hh: Vec<(Vec<T>, T)>,
    /// Upper-triangular R, column-major: r[c] has length c+1.
    r: Vec<Vec<T>>,
    /// Indices of the input columns that were kept.
    kept: Vec<usize>,
    dim: usize,
}

impl<T: Real> ThinQr<T> {
    fn factor(columns: &[Vec<T>], drop_tol: T) -> Self {
        let dim = columns.first().map_or(0, |c| c.len());
        let mut qr = Self {
            hh: Vec::new(),
            r: Vec::new(),
            kept: Vec::new(),
            dim,
        };
        for (ci, col) in columns.iter().enumerate() {
            let mut x = col.clone();
            for (v, beta) in &qr.hh {
                apply_householder(v, *beta, &mut x);
            }
            let j = qr.hh.len();
            let tail_norm = x[j..].iter().fold(T::zero(), |acc, &t| acc + t * t).sqrt();
            let col_scale = col.iter().fold(T::zero(), |acc, &t| acc + t * t).sqrt();
            if tail_norm <= drop_tol * col_scale.max(T::one()) {
                continue; // dependent column
            }
            let alpha = if x[j] >= T::zero() {
                -tail_norm
            } else {
                tail_norm
            };
            let mut v = vec![T::zero(); dim];
            v[j] = x[j] - alpha;
            v[(j + 1)..].copy_from_slice(&x[(j + 1)..]);
            let vtv = v.iter().fold(T::zero(), |acc, &t| acc + t * t);
            let beta = T::of(2.0) / vtv;
            let mut rcol = x[..j].to_vec();
            rcol.push(alpha);
            qr.hh.push((v, beta));
            qr.r.push(rcol);
            qr.kept.push(ci);
        }
        qr
    }

    fn k(&self) -> usize {
        self.hh.len()
    }

    fn qt_apply(&self, y: &mut [T]) {
        for (v, beta) in &self.hh {
            apply_householder(v, *beta, y);
        }
    }

    fn q_apply(&self, y: &mut [T]) {
        for (v, beta) in self.hh.iter().rev() {
            apply_householder(v, *beta, y);
        }
    }

    /// `Q Q^T y`: the orthogonal projection of `y` onto the column range.
    fn project_onto_range(&self, y: &[T]) -> Vec<T> {
        let mut z = y.to_vec();
        self.qt_apply(&mut z);
        for t in z.iter_mut().skip(self.k()) {
            *t = T::zero();
        }
        self.q_apply(&mut z);
        z
    }

    /// Least-squares solution of `M lambda = y` over the kept columns.
    fn least_squares(&self, y: &[T]) -> Vec<T> {
        let mut z = y.to_vec();
        self.qt_apply(&mut z);
        self.back_substitute(&z)
    }

    fn back_substitute(&self, z: &[T]) -> Vec<T> {
        let k = self.k();
        let mut lambda = vec![T::zero(); k];
        for c in (0..k).rev() {
            let mut s = z[c];
            for (c2, l) in lambda.iter().enumerate().take(k).skip(c + 1) {
                s = s - self.r[c2][c] * *l;
            }
            lambda[c] = s / self.r[c][c];
        }
        lambda
    }

    /// Minimum-norm solution of `M^T delta = rhs` (rows of `M^T` are the
    /// original columns): `delta = Q (R^-T rhs_kept, 0)`.
    fn min_norm_solution(&self, rhs: &[T]) -> Vec<T> {
        let k = self.k();
        let mut w = vec![T::zero(); k];
        for c in 0..k {
            let mut s = rhs[self.kept[c]];
            for (rc, wc) in self.r[c].iter().zip(w.iter()).take(c) {
                s = s - *rc * *wc;
            }
            w[c] = s / self.r[c][c];
        }
        let mut delta = vec![T::zero(); self.dim];
        delta[..k].copy_from_slice(&w);
        self.q_apply(&mut delta);
        delta
    }
}

fn apply_householder<T: Real>(v: &[T], beta: T, y: &mut [T]) {
    let mut dot = T::zero();
    for (vi, yi) in v.iter().zip(y.iter()) {
        dot = dot + *vi * *yi;
    }
    let s = beta * dot;
    for (vi, yi) in v.iter().zip(y.iter_mut()) {
        *yi = *yi - *vi * s;
    }
}
