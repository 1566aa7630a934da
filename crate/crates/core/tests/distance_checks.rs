//! The primal solver against brute force, and strong duality between the
//! primal distance and the maximized clearance.

use ellipse_cbf::distance::{
    maximize_clearance, membership_residual, min_distance, project_onto_ellipse,
};
use ellipse_cbf::geometry::{AgentState, EllipseShape};
use ellipse_cbf::Vec2;
use ellipse_cbf_testkit::{boundary_at, grid_min_distance, random_disjoint_pair, TestRng};

#[test]
fn projection_matches_dense_boundary_grid() {
    let mut rng = TestRng::seeded(0xd157_0001);
    let tau = 2.0 * std::f64::consts::PI;
    for _ in 0..10 {
        let a = rng.range(0.1, 1.0);
        let b = rng.range(0.1, 1.0);
        let shape = EllipseShape::new(a.max(b), a.min(b)).unwrap();
        let state = AgentState::new(
            Vec2::new(rng.range(-2.0, 2.0), rng.range(-2.0, 2.0)),
            rng.angle(),
        );
        let x = state.p + Vec2::new(rng.range(-4.0, 4.0), rng.range(-4.0, 4.0));
        let proj = project_onto_ellipse(&state, &shape, x);

        if membership_residual(&state, &shape, x) == 0.0 {
            assert_eq!(proj, x, "interior points project to themselves");
            continue;
        }
        assert!(membership_residual(&state, &shape, proj) < 1e-9);
        let d_proj = (proj - x).norm();
        let mut grid = f64::INFINITY;
        for k in 0..1_000_000u32 {
            let y = boundary_at(&state, &shape, tau * k as f64 / 1e6);
            grid = grid.min((y - x).norm());
        }
        assert!(
            d_proj <= grid + 1e-12,
            "projection must not lose to the grid"
        );
        assert!(
            (grid - d_proj).abs() <= 1e-6,
            "gap to grid: {}",
            grid - d_proj
        );
    }
}

#[test]
fn strong_duality_on_random_disjoint_pairs() {
    let mut rng = TestRng::seeded(0xd157_0002);
    for trial in 0..100 {
        let (cfg, dist) = random_disjoint_pair(&mut rng, 1e-2);
        let dual = maximize_clearance(&cfg.0, &cfg.1, &cfg.2, &cfg.3, 0.0);
        let gap = (dual.h_star - dist.w_star).abs();
        assert!(
            gap <= 1e-6,
            "trial {trial}: |h* - w*| = {gap} (h* = {}, w* = {})",
            dual.h_star,
            dist.w_star
        );
    }
}

#[test]
fn alternating_projections_agree_with_brute_force() {
    let mut rng = TestRng::seeded(0xd157_0003);
    for trial in 0..50 {
        let (cfg, dist) = random_disjoint_pair(&mut rng, 1e-2);
        let brute = grid_min_distance(&cfg, 3600);
        assert!(
            (dist.w_star - brute).abs() <= 1e-4,
            "trial {trial}: alternating projections {} vs grid {brute}",
            dist.w_star
        );
    }
}

#[test]
fn disjointness_agrees_with_primal_distance() {
    use ellipse_cbf::distance::are_disjoint;
    use ellipse_cbf_testkit::random_pair;

    let mut rng = TestRng::seeded(0xd157_0005);
    let mut split = (0, 0);
    for _ in 0..300 {
        let cfg = random_pair(&mut rng);
        let disjoint = are_disjoint(&cfg.0, &cfg.1, &cfg.2, &cfg.3);
        let w = min_distance(&cfg.0, &cfg.1, &cfg.2, &cfg.3).w_star;
        if disjoint {
            assert!(w > 0.0, "declared disjoint but primal distance is {w}");
            split.0 += 1;
        } else {
            assert!(w <= 1e-6, "declared overlapping but primal distance is {w}");
            split.1 += 1;
        }
    }
    assert!(
        split.0 >= 20 && split.1 >= 10,
        "sampling too lopsided: {split:?}"
    );
}

#[test]
fn closest_points_feasible_and_consistent() {
    let mut rng = TestRng::seeded(0xd157_0004);
    for _ in 0..50 {
        let (cfg, dist) = random_disjoint_pair(&mut rng, 1e-2);
        assert!(dist.converged);
        assert!(membership_residual(&cfg.0, &cfg.1, dist.xi) <= 1e-9);
        assert!(membership_residual(&cfg.2, &cfg.3, dist.eta) <= 1e-9);
        assert!(((dist.eta - dist.xi).norm() - dist.w_star).abs() <= 1e-9);

        let swapped = min_distance(&cfg.2, &cfg.3, &cfg.0, &cfg.1);
        assert!((swapped.w_star - dist.w_star).abs() <= 1e-9);
    }
}
