use inertial_tikhonov::inner_solve::{cg_solve, spectral_solve, system_residual};
use inertial_tikhonov::iterate::{tikhonov_step, InnerSolver, StepSolve};
use inertial_tikhonov::linop::{make_convolution, DenseOperator, LinearOperator};
use inertial_tikhonov::problems::gaussian_psf;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `(λ AᵀA + I)⁻¹ rhs` by LU on the assembled normal matrix.
fn dense_tikhonov_solve(a: &DMatrix<f64>, lambda: f64, rhs: &[f64]) -> Vec<f64> {
    let n = a.ncols();
    let g = a.transpose() * a * lambda + DMatrix::identity(n, n);
    g.lu()
        .solve(&DVector::from_column_slice(rhs))
        .unwrap()
        .as_slice()
        .to_vec()
}

#[test]
fn cg_matches_dense_lu() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let entries = random_vec(&mut rng, 5 * 4);
    let op = DenseOperator::new(5, 4, entries.clone()).unwrap();
    let a = DMatrix::from_row_slice(5, 4, &entries);
    let rhs = random_vec(&mut rng, 4);
    let report = cg_solve(&op, 0.7, &rhs, &[0.0; 4], 1e-14, 50).unwrap();
    let oracle = dense_tikhonov_solve(&a, 0.7, &rhs);
    for (x, y) in report.solution.iter().zip(&oracle) {
        assert!((x - y).abs() <= 1e-8, "{x} vs {y}");
    }
    assert!(report.converged);
    assert!(report.iterations <= 4 + 1);
}

#[test]
fn tikhonov_step_matches_dense_oracle_cold_and_warm() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let entries = random_vec(&mut rng, 6 * 6);
    let op = DenseOperator::new(6, 6, entries.clone()).unwrap();
    let a = DMatrix::from_row_slice(6, 6, &entries);
    let (w, y, start) = (
        random_vec(&mut rng, 6),
        random_vec(&mut rng, 6),
        random_vec(&mut rng, 6),
    );
    let lambda = 2.5;
    let aty = op.apply_adjoint(&y).unwrap();
    let rhs: Vec<f64> = aty.iter().zip(&w).map(|(g, wi)| lambda * g + wi).collect();
    let oracle = dense_tikhonov_solve(&a, lambda, &rhs);
    for start in [None, Some(start.as_slice())] {
        let solve = StepSolve {
            solver: InnerSolver::Cg,
            tol: 1e-14,
            max_iter: Some(60),
            start,
        };
        let out = tikhonov_step(&op, &w, lambda, &y, solve).unwrap();
        for (x, o) in out.x_next.iter().zip(&oracle) {
            assert!((x - o).abs() <= 1e-9, "{x} vs {o}");
        }
    }
}

#[test]
fn spectral_solve_matches_cg() {
    let psf = gaussian_psf(9, 1.5).unwrap();
    let op = make_convolution(&psf, 16, 16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let rhs = random_vec(&mut rng, 256);
    let fast = spectral_solve(&op, 2.0, &rhs).unwrap();
    let cg = cg_solve(&op, 2.0, &rhs, &vec![0.0; 256], 1e-14, 1000).unwrap();
    let scale = fast.iter().map(|v| v.abs()).fold(0.0, f64::max);
    for (x, y) in fast.iter().zip(&cg.solution) {
        assert!((x - y).abs() <= 1e-9 * scale.max(1.0));
    }
    assert!(system_residual(&op, 2.0, &fast, &rhs).unwrap() <= 1e-10);
}

#[test]
fn auto_solver_picks_spectral_for_convolutions() {
    let psf = gaussian_psf(5, 1.0).unwrap();
    let op = make_convolution(&psf, 8, 8).unwrap();
    let w = vec![0.5; 64];
    let y = vec![1.0; 64];
    let out = tikhonov_step(&op, &w, 1.0, &y, StepSolve::default()).unwrap();
    assert_eq!(out.inner_iterations, 0);
    let cg = tikhonov_step(
        &op,
        &w,
        1.0,
        &y,
        StepSolve {
            solver: InnerSolver::Cg,
            tol: 1e-14,
            ..StepSolve::default()
        },
    )
    .unwrap();
    assert!(cg.inner_iterations > 0);
    for (a, b) in out.x_next.iter().zip(&cg.x_next) {
        assert!((a - b).abs() <= 1e-10);
    }
    let dense = DenseOperator::identity(2).unwrap();
    let spectral_only = StepSolve {
        solver: InnerSolver::Spectral,
        ..StepSolve::default()
    };
    assert!(tikhonov_step(&dense, &[0.0, 0.0], 1.0, &[1.0, 1.0], spectral_only).is_err());
}

proptest! {
    #[test]
    fn cg_reaches_requested_relative_residual(
        seed in any::<u64>(),
        r in 1usize..9,
        c in 1usize..9,
        lambda in 0.01f64..50.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let op = DenseOperator::new(r, c, random_vec(&mut rng, r * c)).unwrap();
        let rhs = random_vec(&mut rng, c);
        let tol = 1e-10;
        let rep = cg_solve(&op, lambda, &rhs, &vec![0.0; c], tol, 10 * c).unwrap();
        let rnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let true_res = system_residual(&op, lambda, &rep.solution, &rhs).unwrap();
        prop_assert!(rep.converged);
        prop_assert!(true_res <= 1e3 * tol * rnorm.max(1e-300));
    }
}
