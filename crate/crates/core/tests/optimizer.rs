mod common;

use common::{enumerate_taps, random_lp, small_dispatch};
use voltreg::optimizer::{
    branch_and_bound, solve_lp, solve_lp_dense, solve_milp, DispatchOptions, DispatchProblem, DispatchStatus, LpBuilder,
    LpError, MipOptions, MipStatus,
};

#[test]
fn revised_simplex_agrees_with_dense_reference() {
    for seed in 0..150 {
        let n = 3 + (seed as usize % 9);
        let m = 2 + (seed as usize * 7 % 8);
        let lp = random_lp(seed, n, m);
        let dense = solve_lp_dense(&lp).unwrap_or_else(|e| panic!("seed {seed}: reference failed: {e}"));
        let rev = solve_lp(&lp).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert!(
            (rev.objective - dense.objective).abs() <= 1e-6 * dense.objective.abs().max(1.0),
            "seed {seed}: {} vs {}",
            rev.objective,
            dense.objective
        );
        assert!(lp.violations(&rev.x, 1e-7).is_empty(), "seed {seed}: {:?}", lp.violations(&rev.x, 1e-7));
    }
}

#[test]
fn fifty_variable_lps_agree_with_dense_reference() {
    for seed in 0..20 {
        let lp = random_lp(3000 + seed, 50, 30);
        let dense = solve_lp_dense(&lp).unwrap();
        let rev = solve_lp(&lp).unwrap();
        assert!((rev.objective - dense.objective).abs() <= 1e-6, "seed {seed}: {} vs {}", rev.objective, dense.objective);
    }
}

#[test]
fn warm_start_reaches_the_same_optimum() {
    for seed in 0..20 {
        let lp = random_lp(1000 + seed, 10, 8);
        let cold = solve_lp(&lp).unwrap();
        let mut shifted = lp.clone();
        for c in shifted.cost.iter_mut().step_by(3) {
            *c *= 0.5;
        }
        let cold2 = solve_lp(&shifted).unwrap();
        let warm = voltreg::optimizer::solve_lp_with(&shifted, &voltreg::optimizer::SimplexOptions::for_precision::<f64>(), Some(&cold.basis))
            .unwrap();
        assert!((warm.objective - cold2.objective).abs() < 1e-9);
    }
}

#[test]
fn single_precision_solve_is_close() {
    for seed in 0..30 {
        let lp = random_lp(500 + seed, 6, 5);
        let d = solve_lp(&lp).unwrap();
        let s = solve_lp(&lp.cast::<f32>()).unwrap();
        assert!((d.objective - s.objective as f64).abs() < 1e-3 * d.objective.abs().max(1.0), "seed {seed}");
    }
}

#[test]
fn infeasible_and_unbounded_are_reported() {
    let mut b = LpBuilder::new();
    let x = b.add_var("x", 0.0, 1.0, 1.0, false);
    b.add_row("need", 2.0, f64::INFINITY, &[(x, 1.0)]);
    assert!(matches!(solve_lp(&b.build()), Err(LpError::Infeasible { .. })));

    let mut b = LpBuilder::new();
    let x = b.add_var("x", 0.0, f64::INFINITY, -1.0, false);
    let y = b.add_var("y", 0.0, 1.0, 0.0, false);
    b.add_row("r", f64::NEG_INFINITY, 1.0, &[(x, -1.0), (y, 1.0)]);
    assert!(matches!(solve_lp(&b.build()), Err(LpError::Unbounded { .. })));
}

#[test]
fn branch_and_bound_solves_integer_knapsack_variant() {
    // max 5a + 4b + 3c st 2a + 3b + c <= 5, 4a + b + 2c <= 11, 3a + 4b + 2c <= 8, integers in [0, 3]
    let mut b = LpBuilder::new();
    let a = b.add_var("a", 0.0, 3.0, -5.0, true);
    let bb = b.add_var("b", 0.0, 3.0, -4.0, true);
    let c = b.add_var("c", 0.0, 3.0, -3.0, true);
    b.add_row("r1", f64::NEG_INFINITY, 5.0, &[(a, 2.0), (bb, 3.0), (c, 1.0)]);
    b.add_row("r2", f64::NEG_INFINITY, 11.0, &[(a, 4.0), (bb, 1.0), (c, 2.0)]);
    b.add_row("r3", f64::NEG_INFINITY, 8.0, &[(a, 3.0), (bb, 4.0), (c, 2.0)]);
    let lp = b.build();
    let r = branch_and_bound(&lp, &MipOptions::default(), None, &|_| Vec::new()).unwrap();
    assert_eq!(r.status, MipStatus::Optimal);
    // brute force
    let mut best = f64::INFINITY;
    for va in 0..=3 {
        for vb in 0..=3 {
            for vc in 0..=3 {
                let x = [va as f64, vb as f64, vc as f64];
                if lp.violations(&x, 1e-9).is_empty() {
                    best = best.min(lp.objective(&x));
                }
            }
        }
    }
    assert!((r.objective - best).abs() < 1e-9);
    assert!(r.root_relaxation <= r.objective + 1e-9);
}

#[test]
fn dispatch_milp_matches_exhaustive_enumeration() {
    for seed in 0..60 {
        let prob = small_dispatch(seed);
        let sol = solve_milp(&prob, &DispatchOptions::default());
        let brute = enumerate_taps(&prob);
        assert_eq!(sol.status, DispatchStatus::Optimal, "seed {seed}");
        assert!((sol.objective - brute).abs() <= 1e-6, "seed {seed}: {} vs {brute}", sol.objective);
        assert!(sol.lp_bound <= sol.objective + 1e-9, "seed {seed}");
    }
}

#[test]
fn zero_perturbation_reproduces_base_deviation() {
    let mut prob = DispatchProblem::random(9, 6, 2, 2, 3, 16);
    for o in &mut prob.oltcs {
        o.ramp = 0;
    }
    let ratios: Vec<f64> = prob.oltcs.iter().map(|o| o.ratio(o.tau_prev as f64)).collect();
    for s in &mut prob.steps {
        s.q_max_pu.iter_mut().for_each(|q| *q = 0.0);
        s.a0 = ratios.clone();
    }
    let sol = solve_milp(&prob, &DispatchOptions::default());
    let expected: f64 = prob.steps.iter().flat_map(|s| s.vmag0.iter()).map(|v| (v - 1.0).abs()).sum::<f64>()
        * prob.weights.w1;
    assert!((sol.objective - expected).abs() < 1e-12, "{} vs {expected}", sol.objective);
    assert_eq!(sol.j2, 0.0);
}

#[test]
fn larger_tap_weight_never_adds_moves() {
    for seed in 0..15 {
        let mut prob = DispatchProblem::random(200 + seed, 6, 2, 1, 5, 16);
        let mut last = f64::INFINITY;
        for w2 in [0.0005, 0.001, 0.01, 0.05, 0.15, 0.5] {
            prob.weights.w2 = w2;
            let sol = solve_milp(&prob, &DispatchOptions::default());
            assert!(sol.j2 <= last + 1e-9, "seed {seed}, w2 {w2}: {} after {last}", sol.j2);
            last = sol.j2;
        }
    }
}

#[test]
fn solve_is_deterministic() {
    let prob = DispatchProblem::random(77, 8, 3, 2, 4, 16);
    let a = solve_milp(&prob, &DispatchOptions::default());
    let b = solve_milp(&prob, &DispatchOptions::default());
    assert_eq!(a.taps, b.taps);
    assert_eq!(a.q_pu, b.q_pu);
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
}

#[test]
fn lp_format_dump_names_every_variable() {
    let prob = DispatchProblem::random(4, 4, 1, 1, 2, 16);
    let (lp, _) = voltreg::optimizer::reduced_instance(&prob);
    let text = lp.to_lp_format();
    assert!(text.starts_with("\\") || text.contains("Minimize"));
    for name in &lp.var_names {
        assert!(text.contains(name.as_str()), "{name} missing");
    }
    assert!(text.contains("General"));
}
