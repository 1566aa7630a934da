//! Barrier-constraint assembly and the minimally invasive safety filter.
//!
//! Every unordered agent pair `(i, j)` with `i < j` carries a certificate:
//! the supporting-line parameter `phi`, the signed clearance `h`, and the
//! clearance gradient. Each control period the filter refreshes all
//! certificates, emits one linear barrier row per pair,
//!
//! ```text
//!   dh/dx_i . u_i + dh/dx_j . u_j + dh/dphi . u_phi + alpha_gain * h >= 0
//! ```
//!
//! stacks the agents' nominal inputs with a gradient-ascent nominal rate for
//! every line parameter, and solves one quadratic program over the whole
//! ensemble (decision dimension `3n + n(n-1)/2`).

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{
    clearance_gradient, signed_clearance, AgentState, ClearanceGradient, EllipseShape,
    SupportLineParam,
};
use crate::linalg::Vec2;
use crate::qp::{solve_qp_full, ConstraintRow, QpError};
use crate::scalar::Real;

/// Velocity plus angular-rate command for one agent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlInput<T> {
    pub linear: Vec2<T>,
    pub angular: T,
}

impl<T: Real> ControlInput<T> {
    pub fn zero() -> Self {
        Self {
            linear: Vec2::zero(),
            angular: T::zero(),
        }
    }
}

/// Index bookkeeping for the stacked decision vector: three slots per agent
/// followed by one slot per unordered pair, pairs ordered lexicographically.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleLayout {
    n: usize,
}

impl EnsembleLayout {
    pub fn new(agent_count: usize) -> Self {
        Self { n: agent_count }
    }

    #[inline]
    pub fn agent_count(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn pair_count(&self) -> usize {
        self.n.saturating_sub(1) * self.n / 2
    }

    #[inline]
    pub fn dim(&self) -> usize {
        3 * self.n + self.pair_count()
    }

    /// First of the three slots owned by an agent.
    #[inline]
    pub fn agent_base(&self, agent: usize) -> usize {
        debug_assert!(agent < self.n);
        3 * agent
    }

    /// Rank of the pair `(i, j)`, `i < j`, in lexicographic order.
    #[inline]
    pub fn pair_rank(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.n);
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    /// Decision slot of the line parameter owned by the pair `(i, j)`.
    #[inline]
    pub fn phi_slot(&self, i: usize, j: usize) -> usize {
        3 * self.n + self.pair_rank(i, j)
    }

    /// All pairs in rank order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| ((i + 1)..self.n).map(move |j| (i, j)))
    }
}

/// Per-pair barrier certificate. The supporting line belongs to the agent
/// with the lower index.
#[derive(Clone, Copy, Debug)]
pub struct PairCertificate<T> {
    pub i: usize,
    pub j: usize,
    pub phi: SupportLineParam<T>,
    pub h: T,
    pub grad: ClearanceGradient<T>,
}

impl<T: Real> PairCertificate<T> {
    pub fn new(
        i: usize,
        j: usize,
        phi: SupportLineParam<T>,
        states: &[AgentState<T>],
        shapes: &[EllipseShape<T>],
    ) -> Self {
        debug_assert!(i < j);
        let mut cert = Self {
            i,
            j,
            phi,
            h: T::zero(),
            grad: ClearanceGradient {
                d_p_i: Vec2::zero(),
                d_theta_i: T::zero(),
                d_p_j: Vec2::zero(),
                d_theta_j: T::zero(),
                d_phi: T::zero(),
            },
        };
        cert.refresh(states, shapes);
        cert
    }

    /// Recomputes `h` and the gradient from the current states at the
    /// stored line parameter.
    pub fn refresh(&mut self, states: &[AgentState<T>], shapes: &[EllipseShape<T>]) {
        let (si, sj) = (&states[self.i], &states[self.j]);
        let (qi, qj) = (&shapes[self.i], &shapes[self.j]);
        self.h = signed_clearance(si, qi, sj, qj, &self.phi);
        self.grad = clearance_gradient(si, qi, sj, qj, &self.phi);
    }
}

/// Initial line-parameter policy.
#[derive(Clone, Debug, PartialEq)]
pub enum PhiInit<T> {
    /// Maximizer of a 720-point clearance scan, per pair.
    ScanMax,
    /// Seeded uniform draws from the positive-clearance set.
    Random { seed: u64 },
    /// Explicit parameters, one per pair in rank order.
    Explicit(Vec<T>),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum InitError {
    #[error("agents {i} and {j} admit no separating supporting line (they overlap)")]
    Overlap { i: usize, j: usize },
    #[error("explicit initial phi for pair ({i}, {j}) has negative clearance h = {h}")]
    UnsafeExplicitPhi { i: usize, j: usize, h: f64 },
    #[error("expected {expected} explicit initial line parameters, got {got}")]
    ExplicitLengthMismatch { expected: usize, got: usize },
}

const INIT_SCAN_SAMPLES: usize = 720;
const RANDOM_DRAW_CAP: usize = 10_000;

/// Picks a supporting-line parameter with positive clearance for one pair by
/// scanning 720 equispaced candidates and keeping the maximizer.
pub fn initialize_phi<T: Real>(
    state_i: &AgentState<T>,
    shape_i: &EllipseShape<T>,
    state_j: &AgentState<T>,
    shape_j: &EllipseShape<T>,
) -> Option<SupportLineParam<T>> {
    let pi = T::PI();
    let step = (pi + pi) / T::of(INIT_SCAN_SAMPLES as f64);
    let mut best_phi = T::zero();
    let mut best_h = T::neg_infinity();
    for k in 0..INIT_SCAN_SAMPLES {
        let phi = -pi + step * T::of((k + 1) as f64);
        let h = signed_clearance(
            state_i,
            shape_i,
            state_j,
            shape_j,
            &SupportLineParam::new(phi),
        );
        if h > best_h {
            best_h = h;
            best_phi = phi;
        }
    }
    (best_h > T::zero()).then(|| SupportLineParam::new(best_phi))
}

/// Materializes one initial line parameter per pair according to the policy.
pub fn resolve_initial_phis<T: Real>(
    states: &[AgentState<T>],
    shapes: &[EllipseShape<T>],
    init: &PhiInit<T>,
    layout: &EnsembleLayout,
) -> Result<Vec<SupportLineParam<T>>, InitError> {
    let scan = |i: usize, j: usize| {
        initialize_phi(&states[i], &shapes[i], &states[j], &shapes[j])
            .ok_or(InitError::Overlap { i, j })
    };
    match init {
        PhiInit::ScanMax => layout.pairs().map(|(i, j)| scan(i, j)).collect(),
        PhiInit::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            layout
                .pairs()
                .map(|(i, j)| {
                    for _ in 0..RANDOM_DRAW_CAP {
                        let unit = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                        let phi = T::of((2.0 * unit - 1.0) * std::f64::consts::PI);
                        let line = SupportLineParam::new(phi);
                        let h =
                            signed_clearance(&states[i], &shapes[i], &states[j], &shapes[j], &line);
                        if h > T::zero() {
                            return Ok(line);
                        }
                    }
                    // Positive-clearance set too small to hit by sampling.
                    scan(i, j)
                })
                .collect()
        }
        PhiInit::Explicit(values) => {
            if values.len() != layout.pair_count() {
                return Err(InitError::ExplicitLengthMismatch {
                    expected: layout.pair_count(),
                    got: values.len(),
                });
            }
            layout
                .pairs()
                .zip(values)
                .map(|((i, j), &phi)| {
                    let line = SupportLineParam::new(phi);
                    let h = signed_clearance(&states[i], &shapes[i], &states[j], &shapes[j], &line);
                    if h < T::zero() {
                        Err(InitError::UnsafeExplicitPhi {
                            i,
                            j,
                            h: h.to_f64().unwrap_or(f64::NAN),
                        })
                    } else {
                        Ok(line)
                    }
                })
                .collect()
        }
    }
}

/// Gradient-ascent nominal rate for a pair's line parameter.
pub fn phi_nominal_input<T: Real>(cert: &PairCertificate<T>, gamma: T) -> T {
    debug_assert!(gamma > T::zero());
    gamma * cert.grad.d_phi
}

/// Builds the barrier row of one certificate: gradient entries at the
/// layout's slots (three per agent plus the pair's line slot, always seven
/// stored coefficients) and `alpha_gain * h` as the constant term.
pub fn build_constraint<T: Real>(
    cert: &PairCertificate<T>,
    alpha_gain: T,
    layout: &EnsembleLayout,
) -> ConstraintRow<T> {
    let bi = layout.agent_base(cert.i);
    let bj = layout.agent_base(cert.j);
    let g = &cert.grad;
    ConstraintRow {
        coeffs: vec![
            (bi, g.d_p_i.x),
            (bi + 1, g.d_p_i.y),
            (bi + 2, g.d_theta_i),
            (bj, g.d_p_j.x),
            (bj + 1, g.d_p_j.y),
            (bj + 2, g.d_theta_j),
            (layout.phi_slot(cert.i, cert.j), g.d_phi),
        ],
        rhs_alpha: alpha_gain * cert.h,
    }
}

/// Result of one filtering step.
#[derive(Clone, Debug)]
pub struct FilterOutput<T> {
    /// Safe input per agent.
    pub inputs: Vec<ControlInput<T>>,
    /// Safe rate per pair line parameter, in pair rank order.
    pub phi_rates: Vec<T>,
    /// Number of barrier rows tight at the solution.
    pub active_set_size: usize,
}

/// Owns the pair certificates and runs the per-step ensemble QP.
#[derive(Clone, Debug)]
pub struct SafetyFilter<T> {
    layout: EnsembleLayout,
    certs: Vec<PairCertificate<T>>,
    gamma: T,
    alpha_gain: T,
}

impl<T: Real> SafetyFilter<T> {
    /// Builds certificates for every pair; fails if any pair admits no
    /// separating line under the chosen policy.
    pub fn new(
        states: &[AgentState<T>],
        shapes: &[EllipseShape<T>],
        gamma: T,
        alpha_gain: T,
        init: &PhiInit<T>,
    ) -> Result<Self, InitError> {
        assert_eq!(states.len(), shapes.len());
        let layout = EnsembleLayout::new(states.len());
        let phis = resolve_initial_phis(states, shapes, init, &layout)?;
        let certs = layout
            .pairs()
            .zip(phis)
            .map(|((i, j), phi)| PairCertificate::new(i, j, phi, states, shapes))
            .collect();
        Ok(Self {
            layout,
            certs,
            gamma,
            alpha_gain,
        })
    }

    pub fn layout(&self) -> &EnsembleLayout {
        &self.layout
    }

    pub fn certificates(&self) -> &[PairCertificate<T>] {
        &self.certs
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn alpha_gain(&self) -> T {
        self.alpha_gain
    }

    /// One safety-filtering step: refreshes every certificate from the given
    /// states, assembles all barrier rows, stacks the nominal inputs with the
    /// gradient-ascent line rates, solves the ensemble QP, and unpacks.
    pub fn filter(
        &mut self,
        states: &[AgentState<T>],
        shapes: &[EllipseShape<T>],
        u_nom_agents: &[ControlInput<T>],
    ) -> Result<FilterOutput<T>, QpError> {
        assert_eq!(states.len(), self.layout.agent_count());
        assert_eq!(u_nom_agents.len(), self.layout.agent_count());

        for cert in &mut self.certs {
            cert.refresh(states, shapes);
        }

        let rows: Vec<ConstraintRow<T>> = self
            .certs
            .iter()
            .map(|c| build_constraint(c, self.alpha_gain, &self.layout))
            .collect();

        let mut u_nom = vec![T::zero(); self.layout.dim()];
        for (k, input) in u_nom_agents.iter().enumerate() {
            let base = self.layout.agent_base(k);
            u_nom[base] = input.linear.x;
            u_nom[base + 1] = input.linear.y;
            u_nom[base + 2] = input.angular;
        }
        for cert in &self.certs {
            u_nom[self.layout.phi_slot(cert.i, cert.j)] = phi_nominal_input(cert, self.gamma);
        }

        let sol = solve_qp_full(&u_nom, &rows)?;

        let inputs = (0..self.layout.agent_count())
            .map(|k| {
                let base = self.layout.agent_base(k);
                ControlInput {
                    linear: Vec2::new(sol.u[base], sol.u[base + 1]),
                    angular: sol.u[base + 2],
                }
            })
            .collect();
        let phi_rates = self
            .certs
            .iter()
            .map(|c| sol.u[self.layout.phi_slot(c.i, c.j)])
            .collect();

        Ok(FilterOutput {
            inputs,
            phi_rates,
            active_set_size: sol.active.len(),
        })
    }

    /// Euler-advances every line parameter; certificates become stale until
    /// the next [`SafetyFilter::filter`] call refreshes them.
    pub fn advance_phis(&mut self, rates: &[T], dt: T) {
        assert_eq!(rates.len(), self.certs.len());
        for (cert, &rate) in self.certs.iter_mut().zip(rates) {
            cert.phi = cert.phi.advanced(rate * dt);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::EllipseShape;

    fn circle_states(xs: &[(f64, f64)]) -> (Vec<AgentState<f64>>, Vec<EllipseShape<f64>>) {
        let states = xs
            .iter()
            .map(|&(x, y)| AgentState::new(Vec2::new(x, y), 0.0))
            .collect();
        let shapes = xs
            .iter()
            .map(|_| EllipseShape::circle(1.0).unwrap())
            .collect();
        (states, shapes)
    }

    #[test]
    fn layout_indexing() {
        let l = EnsembleLayout::new(4);
        assert_eq!(l.dim(), 18);
        assert_eq!(l.pair_count(), 6);
        let ranks: Vec<usize> = l.pairs().map(|(i, j)| l.pair_rank(i, j)).collect();
        assert_eq!(ranks, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(l.phi_slot(0, 1), 12);
        assert_eq!(l.phi_slot(2, 3), 17);
    }

    #[test]
    fn initialize_phi_symmetric_circles() {
        let (states, shapes) = circle_states(&[(0.0, 0.0), (4.0, 0.0)]);
        let line = initialize_phi(&states[0], &shapes[0], &states[1], &shapes[1]).unwrap();
        assert!(
            line.phi().abs() < 0.01,
            "scan maximizer near 0, got {}",
            line.phi()
        );
    }

    #[test]
    fn initialize_phi_overlap_errors() {
        let (states, shapes) = circle_states(&[(0.0, 0.0), (1.5, 0.0)]);
        assert!(initialize_phi(&states[0], &shapes[0], &states[1], &shapes[1]).is_none());
        let layout = EnsembleLayout::new(2);
        let err = resolve_initial_phis(&states, &shapes, &PhiInit::ScanMax, &layout).unwrap_err();
        assert_eq!(err, InitError::Overlap { i: 0, j: 1 });
    }

    #[test]
    fn random_phi_is_separating_and_deterministic() {
        let (states, shapes) = circle_states(&[(0.0, 0.0), (4.0, 0.0)]);
        let layout = EnsembleLayout::new(2);
        let a =
            resolve_initial_phis(&states, &shapes, &PhiInit::Random { seed: 7 }, &layout).unwrap();
        let b =
            resolve_initial_phis(&states, &shapes, &PhiInit::Random { seed: 7 }, &layout).unwrap();
        assert_eq!(a[0].phi(), b[0].phi());
        let h = signed_clearance(&states[0], &shapes[0], &states[1], &shapes[1], &a[0]);
        assert!(h > 0.0);
    }

    #[test]
    fn phi_nominal_scales_gradient() {
        let (states, shapes) = circle_states(&[(0.0, 0.0), (4.0, 0.0)]);
        let mut cert = PairCertificate::new(0, 1, SupportLineParam::new(0.0), &states, &shapes);
        assert_eq!(phi_nominal_input(&cert, 20.0), 0.0);
        cert.grad.d_phi = 0.1;
        assert!((phi_nominal_input(&cert, 20.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn constraint_row_circle_pair() {
        let (states, shapes) = circle_states(&[(0.0, 0.0), (4.0, 0.0)]);
        let layout = EnsembleLayout::new(2);
        let cert = PairCertificate::new(0, 1, SupportLineParam::new(0.0), &states, &shapes);
        let row = build_constraint(&cert, 10.0, &layout);
        assert_eq!(row.coeffs.len(), 7);
        let dense = row.dense(layout.dim());
        assert!((dense[0] + 1.0).abs() < 1e-14);
        assert!(dense[1].abs() < 1e-14 && dense[2].abs() < 1e-14);
        assert!((dense[3] - 1.0).abs() < 1e-14);
        assert!(dense[4].abs() < 1e-14 && dense[5].abs() < 1e-14);
        assert!(dense[6].abs() < 1e-14);
        assert!((row.rhs_alpha - 20.0).abs() < 1e-12);
    }

    #[test]
    fn constraint_row_at_boundary_has_zero_rhs() {
        let (states, shapes) = circle_states(&[(0.0, 0.0), (4.0, 0.0)]);
        let layout = EnsembleLayout::new(2);
        let mut cert = PairCertificate::new(0, 1, SupportLineParam::new(0.0), &states, &shapes);
        cert.h = 0.0;
        let row = build_constraint(&cert, 10.0, &layout);
        assert_eq!(row.rhs_alpha, 0.0);
    }

    #[test]
    fn inactive_filter_passes_nominal_through() {
        let (states, shapes) = circle_states(&[(0.0, 0.0), (40.0, 0.0)]);
        let mut filter =
            SafetyFilter::new(&states, &shapes, 20.0, 10.0, &PhiInit::ScanMax).unwrap();
        let u_nom = vec![
            ControlInput {
                linear: Vec2::new(1.0, 0.0),
                angular: 0.1,
            },
            ControlInput {
                linear: Vec2::new(-1.0, 0.5),
                angular: -0.2,
            },
        ];
        let out = filter.filter(&states, &shapes, &u_nom).unwrap();
        assert_eq!(out.inputs[0], u_nom[0]);
        assert_eq!(out.inputs[1], u_nom[1]);
    }

    #[test]
    fn head_on_filter_matches_halfspace_projection() {
        // Circles closing head-on; the single barrier row is active, so the
        // QP reduces to projecting the stacked nominal onto one halfspace.
        let (states, shapes) = circle_states(&[(0.0, 0.0), (3.0, 0.0)]);
        let mut filter =
            SafetyFilter::new(&states, &shapes, 20.0, 10.0, &PhiInit::ScanMax).unwrap();
        let u_nom = vec![
            ControlInput {
                linear: Vec2::new(30.0, 0.0),
                angular: 0.0,
            },
            ControlInput {
                linear: Vec2::new(-30.0, 0.0),
                angular: 0.0,
            },
        ];
        let out = filter.filter(&states, &shapes, &u_nom).unwrap();

        let layout = EnsembleLayout::new(2);
        let cert = filter.certificates()[0];
        let row = build_constraint(&cert, 10.0, &layout);
        let a = row.dense(layout.dim());
        let mut stacked = vec![
            30.0,
            0.0,
            0.0,
            -30.0,
            0.0,
            0.0,
            phi_nominal_input(&cert, 20.0),
        ];
        let s: f64 = a.iter().zip(&stacked).map(|(ai, ui)| ai * ui).sum::<f64>() + row.rhs_alpha;
        assert!(s < 0.0, "nominal must violate the barrier in this setup");
        let nsq: f64 = a.iter().map(|ai| ai * ai).sum();
        for i in 0..stacked.len() {
            stacked[i] -= a[i] * s / nsq;
        }
        assert!((out.inputs[0].linear.x - stacked[0]).abs() < 1e-9);
        assert!((out.inputs[0].linear.y - stacked[1]).abs() < 1e-9);
        assert!((out.inputs[1].linear.x - stacked[3]).abs() < 1e-9);
        assert!((out.phi_rates[0] - stacked[6]).abs() < 1e-9);
    }
}
