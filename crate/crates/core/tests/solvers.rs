mod common;

use common::*;
use rkm::coord_descent::{self, CdState, IndexRuleState};
use rkm::fixed_point;
use rkm::oracle::{reference_minimizer, rls_closed_form};
use rkm::reformulation::ReformulatedProblem;
use rkm::{AlphaRule, IndexRule, LossKind, SolverConfig};

const RULES: [IndexRule; 3] = [
    IndexRule::Cyclic,
    IndexRule::Aitken,
    IndexRule::Randomized { seed: 7 },
];

fn config(alpha: AlphaRule, tol: f64, budget: usize) -> SolverConfig {
    SolverConfig {
        alpha_rule: alpha,
        tolerance: tol,
        max_iterations: budget,
        record_trace: true,
        ..SolverConfig::default()
    }
}

#[test]
fn jacobi_reaches_the_rls_optimum() {
    for seed in 0..5 {
        let data = regression(30, 3, seed);
        let gram = gaussian_gram(&data, 1.0);
        let p = problem(gram.clone(), LossKind::Rls, 1.0, 0.0, &data);
        let res = fixed_point::solve(&p, &config(AlphaRule::Spectral, 1e-12, 10_000)).unwrap();
        assert!(res.converged);
        let c_star = rls_closed_form(&gram, data.labels(), 1.0).unwrap();
        let f_star = p.objective(&c_star).unwrap();
        assert!(
            (res.objective - f_star).abs() <= 1e-8,
            "{} vs {f_star}",
            res.objective
        );
    }
}

#[test]
fn solvers_beat_the_reference_minimizer() {
    for kind in LossKind::ALL {
        let data = data_for(kind, 30, 2, 40);
        let p = problem(
            trace_one(&gaussian_gram(&data, 0.5)),
            kind,
            0.05,
            0.1,
            &data,
        );
        let f_ref = p
            .objective(&reference_minimizer(&p, 20_000, 1).unwrap())
            .unwrap();
        let jac = fixed_point::solve(&p, &config(AlphaRule::Explicit(1.0), 1e-9, 50_000)).unwrap();
        let cd = coord_descent::solve(&p, &config(AlphaRule::Trace, 1e-9, 10_000)).unwrap();
        assert!(
            jac.objective <= f_ref + 1e-3,
            "{kind}: jacobi {} ref {f_ref}",
            jac.objective
        );
        assert!(
            cd.objective <= f_ref + 1e-3,
            "{kind}: cd {} ref {f_ref}",
            cd.objective
        );
    }
}

#[test]
fn converged_iterates_certify_optimality() {
    let tol = 1e-8;
    for kind in LossKind::ALL {
        let data = data_for(kind, 25, 2, 3);
        let p = problem(trace_one(&gaussian_gram(&data, 0.5)), kind, 0.1, 0.1, &data);
        let jac = fixed_point::solve(&p, &config(AlphaRule::Explicit(1.0), tol, 100_000)).unwrap();
        assert!(jac.converged, "{kind}");
        assert!(p.certificate_norm(&jac.c, &vec![1.0; p.dim()]).unwrap() <= 10.0 * tol);
        assert!(jac.residual_norm < tol);

        let cd = coord_descent::solve(&p, &config(AlphaRule::Trace, tol, 10_000)).unwrap();
        assert!(cd.converged, "{kind}");
        assert!(p.certificate_norm(&cd.c, &p.diagonal_alphas()).unwrap() <= 10.0 * tol);
    }
}

#[test]
fn jacobi_iterates_stay_bounded() {
    for kind in [LossKind::L1Svm, LossKind::Rla, LossKind::Svr] {
        let data = data_for(kind, 20, 2, 12);
        let p = problem(gaussian_gram(&data, 0.5), kind, 0.3, 0.1, &data);
        let alpha = fixed_point::resolve_alpha(p.gram(), AlphaRule::Spectral).unwrap();
        let ymax = data.labels().iter().fold(0.0f64, |m, y| m.max(y.abs()));
        let bound = 2.0 * (1.0 / 0.3 + ymax * (1.0 + alpha));
        let mut worst = 0.0f64;
        fixed_point::solve_observed(&p, &config(AlphaRule::Spectral, 1e-10, 2_000), |_, c| {
            worst = worst.max(c.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        })
        .unwrap();
        assert!(worst <= bound, "{kind}: {worst} > {bound}");
    }
}

#[test]
fn jacobi_is_thread_count_invariant() {
    let data = two_class(60, 3, 0.5, 2);
    let p = problem(gaussian_gram(&data, 0.5), LossKind::L2Svm, 0.5, 0.0, &data);
    let one = fixed_point::solve(&p, &config(AlphaRule::Trace, 1e-9, 500)).unwrap();
    let four = fixed_point::solve(
        &p,
        &SolverConfig {
            threads: 4,
            ..config(AlphaRule::Trace, 1e-9, 500)
        },
    )
    .unwrap();
    assert_eq!(one.c, four.c);
    assert_eq!(one.iterations, four.iterations);
}

/// Coordinate steps are exact line searches on the dual functional `G`.
#[test]
fn coordinate_updates_descend_on_the_dual() {
    for kind in LossKind::ALL {
        let data = data_for(kind, 40, 2, 5);
        let p = problem(gaussian_gram(&data, 0.5), kind, 0.2, 0.1, &data);
        let diag = p.gram().diagonal().to_vec();
        let min_diag = diag.iter().fold(f64::INFINITY, |m, &d| m.min(d));
        for rule in RULES {
            let mut state = CdState::kernel(&p, None).unwrap();
            let mut order = IndexRuleState::new(rule, p.dim());
            let mut g = state.dual_objective();
            let g0 = g;
            let mut sum_h2 = 0.0;
            for _ in 0..20 * p.dim() {
                let i = order.next_index();
                let h = state.update_coordinate(i).unwrap();
                let next = state.dual_objective();
                assert!(
                    next <= g - h * h * diag[i] / 2.0 + 1e-10 * (1.0 + g.abs()),
                    "{kind} {rule:?}: {g} -> {next}, h {h}"
                );
                sum_h2 += h * h;
                g = next;
            }
            assert!(
                sum_h2 <= 2.0 / min_diag * (g0 - g) + 1e-8,
                "{kind} {rule:?}"
            );
            // F + G is a nonnegative gap that closes at the solution
            assert!(state.objective() + g >= -1e-9);
        }
    }
}

/// The primal objective is not a descent function for coordinate descent.
#[test]
fn coordinate_step_can_raise_the_objective() {
    let gram = rkm::GramOperator::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
    let loss = rkm::LossModel::new(LossKind::Rls, 1.0, 0.0, vec![1.0, -1.0]).unwrap();
    let p = rkm::Problem::new(gram, loss).unwrap();
    let mut state = CdState::kernel(&p, None).unwrap();
    let before = state.objective();
    assert_eq!(state.update_coordinate(0).unwrap(), 0.5);
    assert!(state.objective() > before);
}

#[test]
fn coordinate_descent_is_monotone_in_the_dual() {
    for kind in LossKind::ALL {
        let data = data_for(kind, 50, 3, 9);
        let p = problem(gaussian_gram(&data, 0.3), kind, 0.1, 0.1, &data);
        for rule in RULES {
            let mut state = CdState::kernel(&p, None).unwrap();
            let mut order = IndexRuleState::new(rule, p.dim());
            let mut g = state.dual_objective();
            for _ in 0..30 {
                for i in order.next_macro().to_vec() {
                    state.update_coordinate(i).unwrap();
                }
                let next = state.dual_objective();
                assert!(next <= g + 1e-12 * g.abs(), "{kind} {rule:?}");
                g = next;
            }
            // a wider kernel keeps the final solve well conditioned
            let q = problem(gaussian_gram(&data, 2.0), kind, 0.5, 0.1, &data);
            let res = coord_descent::solve(
                &q,
                &SolverConfig {
                    index_rule: rule,
                    ..config(AlphaRule::Trace, 1e-9, 20_000)
                },
            )
            .unwrap();
            assert!(res.converged, "{kind} {rule:?}");
            let gap = res.objective + q.dual_objective(&res.c).unwrap();
            assert!(
                gap.abs() <= 1e-6 * (1.0 + res.objective),
                "{kind} {rule:?}: gap {gap}"
            );
        }
    }
}

#[test]
fn index_rules_are_essentially_cyclic() {
    for ell in [1, 2, 3, 7, 20] {
        for rule in RULES {
            let mut s = IndexRuleState::new(rule, ell);
            let emitted: Vec<usize> = (0..10 * ell + 5).map(|_| s.next_index()).collect();
            for window in emitted.windows(2 * ell) {
                let mut seen = vec![false; ell];
                for &i in window {
                    seen[i] = true;
                }
                assert!(seen.iter().all(|&b| b), "{rule:?} ell {ell}");
            }
        }
    }
}

#[test]
fn randomized_rule_replays() {
    let a: Vec<usize> = {
        let mut s = IndexRuleState::new(IndexRule::Randomized { seed: 99 }, 9);
        (0..90).map(|_| s.next_index()).collect()
    };
    let mut s = IndexRuleState::new(IndexRule::Randomized { seed: 99 }, 9);
    let b: Vec<usize> = (0..90).map(|_| s.next_index()).collect();
    assert_eq!(a, b);
    for chunk in a.chunks(9) {
        let mut sorted = chunk.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..9).collect::<Vec<_>>());
    }
}

#[test]
fn linear_and_kernel_paths_match() {
    for kind in LossKind::ALL {
        let data = data_for(kind, 30, 4, 14);
        let factored = problem(linear_gram(&data), kind, 0.5, 0.1, &data);
        let dense = problem(linear_gram(&data).densify().unwrap(), kind, 0.5, 0.1, &data);
        let mut a = CdState::linear(&factored, None, true).unwrap();
        let mut b = CdState::kernel(&dense, None).unwrap();
        let mut order = IndexRuleState::new(IndexRule::Aitken, 30);
        for _ in 0..200 {
            let i = order.next_index();
            a.update_coordinate(i).unwrap();
            b.update_coordinate(i).unwrap();
            assert!(max_abs_diff(a.c(), b.c()) <= 1e-10, "{kind}");
        }
    }
}

#[test]
fn skip_rule_changes_only_the_update_count() {
    let data = two_class(80, 3, 1.5, 6);
    let p = problem(linear_gram(&data), LossKind::L1Svm, 1.0, 0.0, &data);
    let cfg = config(AlphaRule::Trace, 1e-8, 1_000);
    let with = coord_descent::solve_linear_with(&p, &cfg, true).unwrap();
    let without = coord_descent::solve_linear_with(&p, &cfg, false).unwrap();
    assert_eq!(with.c, without.c);
    assert_eq!(without.w_updates, without.updates);
    assert!(
        with.w_updates < with.updates,
        "{} vs {}",
        with.w_updates,
        with.updates
    );
}

#[test]
fn solvers_agree_on_the_objective() {
    for kind in LossKind::ALL {
        let data = data_for(kind, 40, 2, 22);
        let p = problem(
            trace_one(&gaussian_gram(&data, 0.5)),
            kind,
            0.05,
            0.1,
            &data,
        );
        let jac =
            fixed_point::solve(&p, &config(AlphaRule::Explicit(1.0), 1e-10, 100_000)).unwrap();
        let cd = coord_descent::solve(&p, &config(AlphaRule::Trace, 1e-10, 10_000)).unwrap();
        assert!(
            (jac.objective - cd.objective).abs() <= 1e-5 * (1.0 + cd.objective.abs()),
            "{kind}"
        );
    }
}

#[test]
fn solutions_are_stationary_for_the_smooth_reformulation() {
    let data = two_class(40, 2, 0.5, 8);
    let p = problem(
        trace_one(&gaussian_gram(&data, 0.5)),
        LossKind::L1Svm,
        0.02,
        0.0,
        &data,
    );
    let res = fixed_point::solve(&p, &config(AlphaRule::Explicit(1.0), 1e-10, 100_000)).unwrap();
    assert!(res.converged);
    let rp = ReformulatedProblem::build(&p, 1.0).unwrap();
    assert!(rp.stationarity_residual_fd(&res.c).unwrap() <= 1e-4);
    assert!(rp.stationarity_residual(&res.c).unwrap() <= 1e-4);

    let mut bumped = res.c.clone();
    bumped[0] += 0.1;
    assert!(rp.stationarity_residual_fd(&bumped).unwrap() > 1e-3);
}
