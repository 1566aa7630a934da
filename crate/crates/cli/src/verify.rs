//! Randomized verification suites: numerical witnesses for strong and weak
//! duality, the gradient identities, and the QP optimality conditions.
//!
//! Every suite runs `trials` seeded trials and records its per-trial maximum
//! residual in `verify_report.csv`. Any tolerance breach dumps the trial's
//! inputs for reproduction and fails the command.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ellipse_cbf::distance::{maximize_clearance, min_distance};
use ellipse_cbf::geometry::{
    clearance_gradient, signed_clearance, AgentState, EllipseShape, SupportLineParam,
};
use ellipse_cbf::qp::{solve_qp, ConstraintRow};
use ellipse_cbf::Vec2;

use crate::csvfmt::{fmt_float, record};
use crate::{CliError, RunManifest, EXIT_NUMERICAL, EXIT_OK};

pub const DUALITY_GAP_TOL: f64 = 1e-6;
pub const WEAK_DUALITY_TOL: f64 = 1e-7;
pub const GRADIENT_FD_TOL: f64 = 1e-5;
pub const GRADIENT_NORM_TOL: f64 = 1e-9;
pub const QP_KKT_TOL: f64 = 1e-8;

/// Disjointness margin for sampled pairs; keeps the alternating projections
/// comfortably inside their convergence budget.
const PAIR_MARGIN: f64 = 1e-2;

struct Uniform(ChaCha8Rng);

impl Uniform {
    fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    fn angle(&mut self) -> f64 {
        self.range(-std::f64::consts::PI, std::f64::consts::PI)
    }
}

type Pair = (
    AgentState<f64>,
    EllipseShape<f64>,
    AgentState<f64>,
    EllipseShape<f64>,
);

fn sample_shape(rng: &mut Uniform) -> EllipseShape<f64> {
    let a = rng.range(0.1, 1.0);
    let b = rng.range(0.1, 1.0);
    EllipseShape::new(a.max(b), a.min(b)).unwrap()
}

fn sample_pair(rng: &mut Uniform) -> Pair {
    (
        AgentState::new(
            Vec2::new(rng.range(-3.0, 3.0), rng.range(-3.0, 3.0)),
            rng.angle(),
        ),
        sample_shape(rng),
        AgentState::new(
            Vec2::new(rng.range(-3.0, 3.0), rng.range(-3.0, 3.0)),
            rng.angle(),
        ),
        sample_shape(rng),
    )
}

fn sample_disjoint_pair(rng: &mut Uniform) -> (Pair, f64) {
    loop {
        let pair = sample_pair(rng);
        let d = min_distance(&pair.0, &pair.1, &pair.2, &pair.3);
        if d.converged && d.w_star >= PAIR_MARGIN {
            return (pair, d.w_star);
        }
    }
}

fn describe_pair(pair: &Pair) -> String {
    format!(
        "agent_i: q=({}, {}) p=({}, {}) theta={} | agent_j: q=({}, {}) p=({}, {}) theta={}",
        fmt_float(pair.1.q_major()),
        fmt_float(pair.1.q_minor()),
        fmt_float(pair.0.p.x),
        fmt_float(pair.0.p.y),
        fmt_float(pair.0.theta()),
        fmt_float(pair.3.q_major()),
        fmt_float(pair.3.q_minor()),
        fmt_float(pair.2.p.x),
        fmt_float(pair.2.p.y),
        fmt_float(pair.2.theta()),
    )
}

struct Suite {
    rows: String,
    failures: String,
    all_pass: bool,
}

impl Suite {
    fn new() -> Self {
        Self {
            rows: String::new(),
            failures: String::new(),
            all_pass: true,
        }
    }

    fn push(
        &mut self,
        suite: &str,
        trial: usize,
        metric: &str,
        value: f64,
        tol: f64,
        inputs: impl FnOnce() -> String,
    ) {
        let pass = value <= tol;
        self.rows.push_str(&record(&[
            suite.to_string(),
            trial.to_string(),
            metric.to_string(),
            fmt_float(value),
            fmt_float(tol),
            if pass { "pass" } else { "FAIL" }.to_string(),
        ]));
        if !pass {
            self.all_pass = false;
            let _ = writeln!(
                self.failures,
                "{suite} trial {trial}: {metric} = {} > {} with inputs {}",
                fmt_float(value),
                fmt_float(tol),
                inputs()
            );
        }
    }
}

fn mixed_rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn fd_partials(pair: &Pair, line: &SupportLineParam<f64>) -> [f64; 7] {
    const STEP: f64 = 1e-6;
    let eval = |d: [f64; 7]| {
        signed_clearance(
            &AgentState::new(pair.0.p + Vec2::new(d[0], d[1]), pair.0.theta() + d[2]),
            &pair.1,
            &AgentState::new(pair.2.p + Vec2::new(d[3], d[4]), pair.2.theta() + d[5]),
            &pair.3,
            &SupportLineParam::new(line.phi() + d[6]),
        )
    };
    std::array::from_fn(|k| {
        let mut plus = [0.0; 7];
        let mut minus = [0.0; 7];
        plus[k] = STEP;
        minus[k] = -STEP;
        (eval(plus) - eval(minus)) / (2.0 * STEP)
    })
}

/// Runs all suites and writes `verify_report.csv` (and, on any breach,
/// `verify_failures.txt`) into the output directory. The manifest's exit
/// status is zero only when every tolerance held.
pub fn cmd_verify(seed: u64, trials: usize, out_dir: &Path) -> Result<RunManifest, CliError> {
    if trials == 0 {
        return Err(CliError::Validation(
            "trials must be at least 1".to_string(),
        ));
    }
    let start = Instant::now();
    let mut manifest = RunManifest::new(None, out_dir);
    let mut suite = Suite::new();

    // Strong duality: the maximized clearance equals the primal distance.
    let mut rng = Uniform::new(seed.wrapping_mul(6364136223846793005).wrapping_add(1));
    for trial in 0..trials {
        let (pair, w_star) = sample_disjoint_pair(&mut rng);
        let dual = maximize_clearance(&pair.0, &pair.1, &pair.2, &pair.3, 0.0);
        suite.push(
            "duality_gap",
            trial,
            "abs(h_star - w_star)",
            (dual.h_star - w_star).abs(),
            DUALITY_GAP_TOL,
            || describe_pair(&pair),
        );
    }

    // Weak duality: no line parameter beats the primal distance.
    let mut rng = Uniform::new(seed.wrapping_mul(6364136223846793005).wrapping_add(2));
    for trial in 0..trials {
        let (pair, w_star) = sample_disjoint_pair(&mut rng);
        let mut worst = f64::NEG_INFINITY;
        for k in 0..720 {
            let phi = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * (k + 1) as f64 / 720.0;
            let h = signed_clearance(
                &pair.0,
                &pair.1,
                &pair.2,
                &pair.3,
                &SupportLineParam::new(phi),
            );
            worst = worst.max(h - w_star);
        }
        suite.push(
            "weak_duality",
            trial,
            "max_phi(h - w_star)",
            worst,
            WEAK_DUALITY_TOL,
            || describe_pair(&pair),
        );
    }

    // Gradient identities: unit position blocks, finite-difference agreement.
    let mut rng = Uniform::new(seed.wrapping_mul(6364136223846793005).wrapping_add(3));
    for trial in 0..trials {
        let pair = sample_pair(&mut rng);
        let line = SupportLineParam::new(rng.angle());
        let g = clearance_gradient(&pair.0, &pair.1, &pair.2, &pair.3, &line);
        let norm_err = (g.d_p_i.norm() - 1.0)
            .abs()
            .max((g.d_p_j.norm() - 1.0).abs());
        suite.push(
            "gradient_norms",
            trial,
            "abs(norm(dh/dp) - 1)",
            norm_err,
            GRADIENT_NORM_TOL,
            || format!("{} | phi={}", describe_pair(&pair), fmt_float(line.phi())),
        );

        let fd = fd_partials(&pair, &line);
        let analytic = [
            g.d_p_i.x,
            g.d_p_i.y,
            g.d_theta_i,
            g.d_p_j.x,
            g.d_p_j.y,
            g.d_theta_j,
            g.d_phi,
        ];
        let worst = analytic
            .iter()
            .zip(&fd)
            .map(|(&a, &f)| mixed_rel_err(a, f))
            .fold(0.0f64, f64::max);
        suite.push(
            "gradient_fd",
            trial,
            "max rel err vs central differences",
            worst,
            GRADIENT_FD_TOL,
            || format!("{} | phi={}", describe_pair(&pair), fmt_float(line.phi())),
        );
    }

    // QP optimality: Karush-Kuhn-Tucker residuals of the active-set solver.
    let mut rng = Uniform::new(seed.wrapping_mul(6364136223846793005).wrapping_add(4));
    for trial in 0..trials {
        let dim = 7 + (rng.unit() * 7.0) as usize; // 7..=13
        let m = 1 + (rng.unit() * 6.0) as usize; // 1..=6
        let u_nom: Vec<f64> = (0..dim).map(|_| rng.range(-2.0, 2.0)).collect();
        let rows: Vec<ConstraintRow<f64>> = (0..m)
            .map(|_| ConstraintRow {
                coeffs: (0..dim).map(|i| (i, rng.range(-1.0, 1.0))).collect(),
                rhs_alpha: rng.range(-1.0, 1.0),
            })
            .collect();
        let describe = |u_nom: &[f64], rows: &[ConstraintRow<f64>]| {
            let mut s = format!("u_nom = {u_nom:?}, rows = [");
            for row in rows {
                let dense: Vec<f64> = row.dense(u_nom.len());
                let _ = write!(s, "({dense:?}, {}), ", row.rhs_alpha);
            }
            s.push(']');
            s
        };
        match solve_qp(&u_nom, &rows) {
            Ok(u) => {
                let nominal_feasible = rows.iter().all(|r| r.value_at(&u_nom) >= 0.0);
                let unchanged_err = if nominal_feasible {
                    u.iter()
                        .zip(&u_nom)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0f64, f64::max)
                } else {
                    0.0
                };
                let residual = kkt_residual(&u_nom, &rows, &u).max(unchanged_err);
                suite.push(
                    "qp_kkt",
                    trial,
                    "max KKT residual",
                    residual,
                    QP_KKT_TOL,
                    || describe(&u_nom, &rows),
                );
            }
            Err(e) => {
                suite.push(
                    "qp_kkt",
                    trial,
                    &format!("solver error: {e}"),
                    1.0,
                    QP_KKT_TOL,
                    || describe(&u_nom, &rows),
                );
            }
        }
    }

    std::fs::create_dir_all(out_dir)?;
    let mut report = record(&[
        "suite".to_string(),
        "trial".to_string(),
        "metric".to_string(),
        "value".to_string(),
        "tolerance".to_string(),
        "status".to_string(),
    ]);
    report.push_str(&suite.rows);
    let path = out_dir.join("verify_report.csv");
    std::fs::write(&path, report)?;
    manifest.add(path);

    if !suite.all_pass {
        let path = out_dir.join("verify_failures.txt");
        std::fs::write(&path, &suite.failures)?;
        manifest.add(path);
        eprint!("{}", suite.failures);
    }
    manifest.exit_status = if suite.all_pass {
        EXIT_OK
    } else {
        EXIT_NUMERICAL
    };
    manifest.wall = start.elapsed();
    Ok(manifest)
}

/// Worst Karush-Kuhn-Tucker residual: stationarity against multipliers
/// fitted on the active rows, primal infeasibility, and complementarity.
fn kkt_residual(u_nom: &[f64], rows: &[ConstraintRow<f64>], u: &[f64]) -> f64 {
    let dim = u_nom.len();
    let active: Vec<usize> = (0..rows.len())
        .filter(|&r| rows[r].value_at(u).abs() <= 1e-7)
        .collect();
    let dense: Vec<Vec<f64>> = active.iter().map(|&r| rows[r].dense(dim)).collect();
    let resid: Vec<f64> = u.iter().zip(u_nom).map(|(a, b)| a - b).collect();

    let k = active.len();
    let mut lambda = vec![0.0; k];
    if k > 0 {
        // Normal equations on the active rows, solved by elimination.
        let mut gram = vec![vec![0.0; k + 1]; k];
        for a in 0..k {
            for b in 0..k {
                gram[a][b] = dense[a].iter().zip(&dense[b]).map(|(x, y)| x * y).sum();
            }
            gram[a][k] = dense[a].iter().zip(&resid).map(|(x, y)| x * y).sum();
        }
        for col in 0..k {
            let pivot = (col..k).max_by(|&r1, &r2| {
                gram[r1][col]
                    .abs()
                    .partial_cmp(&gram[r2][col].abs())
                    .unwrap()
            });
            if let Some(p) = pivot {
                gram.swap(col, p);
                if gram[col][col].abs() < 1e-12 {
                    continue;
                }
                for row in (col + 1)..k {
                    let f = gram[row][col] / gram[col][col];
                    let (head, tail) = gram.split_at_mut(row);
                    for (x, y) in tail[0].iter_mut().zip(&head[col]).skip(col) {
                        *x -= f * *y;
                    }
                }
            }
        }
        for row in (0..k).rev() {
            if gram[row][row].abs() < 1e-12 {
                continue;
            }
            let mut s = gram[row][k];
            for c in (row + 1)..k {
                s -= gram[row][c] * lambda[c];
            }
            lambda[row] = s / gram[row][row];
        }
    }

    let mut stationarity = 0.0f64;
    for i in 0..dim {
        let mut v = resid[i];
        for a in 0..k {
            v -= dense[a][i] * lambda[a];
        }
        stationarity = stationarity.max(v.abs());
    }
    let infeasibility = rows
        .iter()
        .map(|r| (-r.value_at(u)).max(0.0))
        .fold(0.0f64, f64::max);
    let complementarity = active
        .iter()
        .enumerate()
        .map(|(a, &r)| (lambda[a] * rows[r].value_at(u)).abs())
        .fold(0.0f64, f64::max);
    stationarity.max(infeasibility).max(complementarity)
}
