mod common;

use certcrf::inference::Quality;
use certcrf::qp::{prune_inactive, solve_restricted_qp, JointConstraint, RestrictedQp};
use common::{grid_search_qp, qp_primal, random_working_set};
use proptest::prelude::*;

fn constraint_strategy(dim: usize) -> impl Strategy<Value = JointConstraint> {
    (prop::collection::vec(-3.0..3.0f64, dim), 0.0..4.0f64)
        .prop_map(|(a, b)| JointConstraint::new(a, b, Quality::ExactCertified))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn objective_never_drops_when_constraints_are_added(
        ws in prop::collection::vec(constraint_strategy(3), 1..8),
        c in 0.1..10.0f64,
    ) {
        let mut qp = RestrictedQp::new(3);
        let mut last = 0.0;
        for w in ws {
            qp.insert(w).unwrap();
            let s = qp.solve(c, 1e-12).unwrap();
            prop_assert!(s.dual_objective >= last - 1e-9, "{} < {}", s.dual_objective, last);
            prop_assert!(s.dual_objective <= s.objective + 1e-9);
            last = s.dual_objective;
        }
    }

    #[test]
    fn warm_start_matches_cold_solve(
        ws in prop::collection::vec(constraint_strategy(2), 1..7),
        c in 0.1..5.0f64,
    ) {
        let mut warm = RestrictedQp::new(2);
        for w in &ws {
            warm.insert(w.clone()).unwrap();
            warm.solve(c, 1e-12).unwrap();
        }
        let warm = warm.solve(c, 1e-12).unwrap();
        let cold = solve_restricted_qp(&ws, c, 1e-12).unwrap();
        prop_assert!((warm.objective - cold.objective).abs() <= 1e-7 * cold.objective.abs().max(1.0));
    }

    #[test]
    fn multipliers_stay_feasible(
        ws in prop::collection::vec(constraint_strategy(3), 1..10),
        c in 0.1..10.0f64,
    ) {
        let s = solve_restricted_qp(&ws, c, 1e-10).unwrap();
        prop_assert!(s.alphas.iter().all(|&a| a >= 0.0));
        prop_assert!(s.alphas.iter().sum::<f64>() <= c * (1.0 + 1e-12));
        prop_assert!(s.xi >= 0.0);
    }
}

#[test]
fn agrees_with_grid_search() {
    for seed in 0..20 {
        let (ws, c) = random_working_set(seed, 4, 3);
        let s = solve_restricted_qp(&ws, c, 1e-12).unwrap();
        let grid = grid_search_qp(&ws, c);
        let smo = qp_primal(&ws, c, &s.theta);
        assert!(smo <= grid + 1e-9, "set {seed}: {smo} vs grid {grid}");
        assert!(grid - smo <= 1e-4, "set {seed}: {smo} vs grid {grid}");
    }
}

#[test]
fn pruning_inactive_constraints_keeps_the_solution() {
    for seed in 0..30 {
        let (mut ws, c) = random_working_set(500 + seed, 5, 3);
        let d = ws[0].delta_psi.len();
        let mut k = 0.0;
        while ws.len() < 5 {
            k += 1.0;
            let a = (0..d).map(|j| ((seed as f64 + k) * (j as f64 + 1.7)).sin()).collect();
            ws.push(JointConstraint::new(a, 0.3 * k, Quality::ExactCertified));
        }
        let full = solve_restricted_qp(&ws, c, 1e-12).unwrap();
        // mark constraints by activity in this solve, then prune the rest
        for (w, &a) in ws.iter_mut().zip(&full.alphas) {
            w.last_active_iteration = if a > 0.0 { 10 } else { 0 };
        }
        let kept = prune_inactive(ws.clone(), 10, 1);
        assert!(!kept.is_empty());
        let pruned = solve_restricted_qp(&kept, c, 1e-12).unwrap();
        assert!(
            (pruned.objective - full.objective).abs() <= 1e-8,
            "set {seed}: {} vs {}",
            pruned.objective,
            full.objective
        );
    }
}

#[test]
fn restricted_qp_prune_drops_only_stale_constraints() {
    let q = Quality::ExactCertified;
    let mut qp = RestrictedQp::new(2);
    qp.insert(JointConstraint::new(vec![1.0, 0.0], 1.0, q)).unwrap();
    // dominated: never active
    qp.insert(JointConstraint::new(vec![1.0, 0.0], 0.1, q)).unwrap();
    for _ in 0..5 {
        qp.solve(1.0, 1e-12).unwrap();
    }
    assert_eq!(qp.prune(3), 1);
    assert_eq!(qp.len(), 1);
    assert!((qp.constraints()[0].loss_sum - 1.0).abs() < 1e-15);
}
