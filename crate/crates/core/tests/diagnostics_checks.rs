use std::sync::Arc;

use inertial_tikhonov::diagnostics::{
    check_error_vs_extrapolant, check_extrapolation_identity, check_inertial_summability,
    check_kstar_bound, check_kstar_bound_from_trace, check_residual_monotonicity,
    check_sequence_lemma, check_series_plateau, check_step_identity, extrapolation_identity_suite,
    kstar_bound, minimum_norm_solution, selftest_config, sequence_lemma_inputs,
    series_accumulators, step_identity_suite, CheckReport, CheckStatus,
};
use inertial_tikhonov::iterate::{
    run_init, tikhonov_step, LambdaSchedule, Method, SolverConfig, StepSolve,
};
use inertial_tikhonov::linop::{DenseOperator, LinearOperator};
use inertial_tikhonov::problems::{dense_test_operator, dense_test_problem, Problem};
use nalgebra::DMatrix;
use proptest::prelude::*;

#[test]
fn identity_suites_hold_on_random_instances() {
    let r = extrapolation_identity_suite(100, 1).unwrap();
    assert!(r.passed && r.samples_checked == 100, "{r}");
    let r = step_identity_suite(30, 2, false).unwrap();
    assert!(r.passed && r.samples_checked == 30, "{r}");
}

#[test]
fn step_identity_at_fixed_point_boundary() {
    let a = DenseOperator::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let xs = [0.5, -1.0];
    let y = a.apply(&xs).unwrap();
    let r = check_step_identity(&a, &xs, &xs, &xs, &y, 4.0).unwrap();
    assert!(r.passed);
    // inconsistent data is outside the identity's hypothesis
    let r = check_step_identity(&a, &xs, &xs, &xs, &[0.0, 0.0, 0.0], 4.0).unwrap();
    assert_eq!(r.status, CheckStatus::Skipped);
}

#[test]
fn residual_monotonicity_single_exact_step_3x3() {
    let a = DenseOperator::from_rows(&[
        vec![3.0, 1.0, 0.0],
        vec![1.0, 2.0, 0.5],
        vec![0.0, 0.5, 1.0],
    ])
    .unwrap();
    let p = Problem::exact(Arc::new(a), vec![1.0, 1.0, 1.0]).unwrap();
    let cfg = SolverConfig {
        max_outer: 1,
        inner_tol: 1e-14,
        record_iterates: true,
        ..selftest_config(Method::Init)
    };
    let t = run_init(&p, &cfg).unwrap();
    let r = check_residual_monotonicity(&t, p.operator.as_ref(), &p.noisy_data).unwrap();
    assert!(r.passed && r.samples_checked == 1, "{r}");
}

#[test]
fn residual_monotonicity_for_it_is_plain_decrease() {
    let p = dense_test_problem(0.02, 3).unwrap();
    let t = run_init(
        &p,
        &SolverConfig {
            method: Method::It,
            ..SolverConfig::default()
        },
    )
    .unwrap();
    let r = check_residual_monotonicity(&t, p.operator.as_ref(), &p.noisy_data).unwrap();
    assert!(r.passed);
    assert!(t
        .records
        .windows(2)
        .all(|w| w[1].residual_norm <= w[0].residual_norm));
}

#[test]
fn residual_monotonicity_flags_tampered_trace() {
    let p = dense_test_problem(0.02, 3).unwrap();
    let mut t = run_init(&p, &SolverConfig::default()).unwrap();
    t.records[2].residual_norm *= 10.0;
    let r = check_residual_monotonicity(&t, p.operator.as_ref(), &p.noisy_data).unwrap();
    assert_eq!(r.status, CheckStatus::Failed);
    assert_eq!(r.failing_index, Some(1));
}

#[test]
fn kstar_bound_on_dense_problem() {
    for level in [0.01, 0.05, 0.1] {
        let p = dense_test_problem(level, 6).unwrap();
        let t = run_init(&p, &selftest_config(Method::Init)).unwrap();
        let r = check_kstar_bound_from_trace(&t);
        assert!(r.passed, "{level}: {r}");
    }
}

#[test]
fn kstar_bound_holds_trivially_at_zero_steps() {
    let p = dense_test_problem(0.9, 6).unwrap();
    let t = run_init(
        &p,
        &SolverConfig {
            tau: 2.0,
            ..selftest_config(Method::Init)
        },
    )
    .unwrap();
    assert_eq!(t.stop_index, 0);
    let r = check_kstar_bound(&t, 1.0, 2.0, p.delta, 1.0, 0.0, 0.0, 0.0);
    assert!(r.passed);
    assert!(kstar_bound(1.0, 2.0, p.delta, 1.0, 0.0, 0.0, 0.0) >= 0.0);
}

#[test]
fn sequence_lemma_on_instrumented_run() {
    let p = dense_test_problem(0.01, 8).unwrap();
    let cfg = SolverConfig {
        alpha_bar: 0.45,
        ..selftest_config(Method::Init)
    };
    let t = run_init(&p, &cfg).unwrap();
    let (alphas, phis, etas) = sequence_lemma_inputs(&t);
    let (r, lemma) = check_sequence_lemma(&alphas, &phis, &etas, 0.45).unwrap();
    assert!(r.passed, "{r}");
    assert!(lemma.hypothesis_violation.is_none());
    assert!(lemma.zeta.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn sequence_lemma_rejects_bad_inputs() {
    assert!(check_sequence_lemma(&[0.0], &[1.0, 1.0, 1.0], &[0.0], 1.0).is_err());
    assert!(check_sequence_lemma(&[0.9], &[1.0, 1.0, 1.0], &[0.0], 0.5).is_err());
    assert!(check_sequence_lemma(&[0.0], &[1.0, -1.0, 1.0], &[0.0], 0.5).is_err());
    assert!(check_sequence_lemma(&[], &[1.0, 1.0, 1.0], &[], 0.5).is_err());
}

#[test]
fn series_plateau_on_well_posed_system() {
    let a = DenseOperator::from_rows(&[vec![2.0, 0.5], vec![0.3, 1.5]]).unwrap();
    let p = Problem::exact(Arc::new(a), vec![1.0, -1.0]).unwrap();
    for method in [Method::It, Method::Init] {
        let cfg = SolverConfig {
            max_outer: 80,
            exact_data_tol: 0.0,
            ..selftest_config(method)
        };
        let t = run_init(&p, &cfg).unwrap();
        let r = check_series_plateau(&t);
        assert!(r.passed, "{method}: {r}");
        let s = series_accumulators(&t);
        assert!(s.step.iter().all(|v| v.is_finite()));
        assert!(check_inertial_summability(&t).passed);
    }
}

#[test]
fn error_never_exceeds_extrapolant_error_above_noise() {
    for level in [0.001, 0.01, 0.1] {
        let p = dense_test_problem(level, 12).unwrap();
        let t = run_init(
            &p,
            &SolverConfig {
                tau: 1.2,
                ..selftest_config(Method::Init)
            },
        )
        .unwrap();
        assert!(check_error_vs_extrapolant(&t).passed);
    }
}

#[test]
fn minimum_norm_solution_matches_pseudoinverse() {
    // rank-deficient: third column is the sum of the first two
    let rows = [
        vec![1.0, 0.0, 1.0],
        vec![0.0, 1.0, 1.0],
        vec![1.0, 1.0, 2.0],
        vec![2.0, -1.0, 1.0],
    ];
    let op = DenseOperator::from_rows(&rows).unwrap();
    let y = op.apply(&[0.3, -0.2, 0.7]).unwrap();
    let x = minimum_norm_solution(&op, &y, &[0.0; 3]).unwrap();
    let a = DMatrix::from_row_slice(4, 3, &rows.concat());
    let pinv = a.clone().pseudo_inverse(1e-12).unwrap();
    let expected = pinv * nalgebra::DVector::from_vec(y.clone());
    for (u, v) in x.iter().zip(expected.iter()) {
        assert!((u - v).abs() <= 1e-10);
    }
    // with an offset x0 the solution is the data-consistent point nearest x0
    let x0 = [1.0, 1.0, 1.0];
    let xd = minimum_norm_solution(&op, &y, &x0).unwrap();
    let ax = op.apply(&xd).unwrap();
    assert!(ax.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-10));
    let null = [1.0, 1.0, -1.0];
    let along: f64 = xd
        .iter()
        .zip(&x0)
        .zip(&null)
        .map(|((a, b), n)| (a - b) * n)
        .sum();
    assert!(along.abs() < 1e-10);
}

#[test]
fn dense_problem_uses_the_public_operator() {
    let p = dense_test_problem(0.0, 0).unwrap();
    let op = dense_test_operator(p.operator.domain_dim()).unwrap();
    let y = op.apply(&p.ground_truth).unwrap();
    assert_eq!(y, p.exact_data);
}

#[test]
fn reports_serialize_as_lines() {
    let r = extrapolation_identity_suite(3, 4).unwrap();
    let line = r.to_json_line();
    assert!(!line.contains('\n'));
    let back: CheckReport = serde_json::from_str(&line).unwrap();
    assert_eq!(back, r);
    assert!(r.to_string().starts_with("[PASS] extrapolation_identity"));
}

#[test]
fn lambda_schedule_is_recorded() {
    let p = dense_test_problem(0.01, 1).unwrap();
    let cfg = SolverConfig {
        lambda_schedule: LambdaSchedule::Custom(vec![1.0, 2.0]),
        ..SolverConfig::default()
    };
    let t = run_init(&p, &cfg).unwrap();
    let lambdas: Vec<f64> = t.records.iter().skip(1).map(|r| r.lambda).collect();
    assert_eq!(lambdas[0], 1.0);
    assert!(lambdas[1..].iter().all(|&l| l == 2.0));
    assert_eq!(t.lambda_floor, 1.0);
}

proptest! {
    #[test]
    fn extrapolation_identity_random(
        seed in any::<u64>(),
        alpha in 0.0f64..0.9,
        v in prop::collection::vec(-100.0f64..100.0, 21),
    ) {
        let _ = seed;
        let (xk, rest) = v.split_at(7);
        let (xkm1, xr) = rest.split_at(7);
        let r = check_extrapolation_identity(xk, xkm1, xr, alpha).unwrap();
        prop_assert!(r.passed, "{}", r);
    }

    #[test]
    fn step_identity_random_scalar(a in 0.1f64..5.0, lambda in 0.01f64..10.0, w in -3.0f64..3.0, xs in -3.0f64..3.0) {
        let op = DenseOperator::from_rows(&[vec![a]]).unwrap();
        let y = [a * xs];
        let x = tikhonov_step(&op, &[w], lambda, &y, StepSolve { tol: 1e-15, ..StepSolve::default() }).unwrap().x_next;
        let r = check_step_identity(&op, &x, &[w], &[xs], &y, lambda).unwrap();
        prop_assert!(r.status != CheckStatus::Failed, "{}", r);
    }
}
