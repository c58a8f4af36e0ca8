use inertial_tikhonov::linop::{
    make_convolution, operator_norm_estimate, DenseOperator, DiagonalOperator, LinearOperator,
};
use inertial_tikhonov::problems::gaussian_psf;
use inertial_tikhonov::Grid;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Direct circular convolution with the PSF center on index (0, 0).
fn naive_convolve(psf: &Grid, x: &Grid) -> Grid {
    let (h, w) = (x.rows() as isize, x.cols() as isize);
    let (ci, cj) = ((psf.rows() / 2) as isize, (psf.cols() / 2) as isize);
    Grid::from_fn(x.rows(), x.cols(), |i, j| {
        let mut acc = 0.0;
        for p in 0..psf.rows() {
            for q in 0..psf.cols() {
                let si = (i as isize - (p as isize - ci)).rem_euclid(h) as usize;
                let sj = (j as isize - (q as isize - cj)).rem_euclid(w) as usize;
                acc += psf.get(p, q) * x.get(si, sj);
            }
        }
        acc
    })
}

/// Adjoint of the circular convolution: correlation with the PSF.
fn naive_correlate(psf: &Grid, y: &Grid) -> Grid {
    let (h, w) = (y.rows() as isize, y.cols() as isize);
    let (ci, cj) = ((psf.rows() / 2) as isize, (psf.cols() / 2) as isize);
    Grid::from_fn(y.rows(), y.cols(), |i, j| {
        let mut acc = 0.0;
        for p in 0..psf.rows() {
            for q in 0..psf.cols() {
                let si = (i as isize + (p as isize - ci)).rem_euclid(h) as usize;
                let sj = (j as isize + (q as isize - cj)).rem_euclid(w) as usize;
                acc += psf.get(p, q) * y.get(si, sj);
            }
        }
        acc
    })
}

fn random_grid(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Grid {
    Grid::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Dense matrix of any operator, built column by column.
fn to_matrix(op: &dyn LinearOperator) -> DMatrix<f64> {
    let (m, n) = (op.range_dim(), op.domain_dim());
    let mut a = DMatrix::zeros(m, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = op.apply(&e).unwrap();
        for i in 0..m {
            a[(i, j)] = col[i];
        }
    }
    a
}

#[test]
fn fft_convolution_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let psf = random_grid(&mut rng, 5, 5);
    let x = random_grid(&mut rng, 16, 16);
    let op = make_convolution(&psf, 16, 16).unwrap();
    let fast = op.apply(x.as_slice()).unwrap();
    let slow = naive_convolve(&psf, &x);
    assert!(max_abs_diff(&fast, slow.as_slice()) <= 1e-10);

    let y = random_grid(&mut rng, 16, 16);
    let fast_adj = op.apply_adjoint(y.as_slice()).unwrap();
    let slow_adj = naive_correlate(&psf, &y);
    assert!(max_abs_diff(&fast_adj, slow_adj.as_slice()) <= 1e-10);
}

#[test]
fn convolution_on_rectangular_grid_and_overhanging_psf() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random_grid(&mut rng, 12, 20);
    for (pr, pc) in [(3, 7), (13, 21), (1, 1)] {
        let psf = random_grid(&mut rng, pr, pc);
        let op = make_convolution(&psf, 12, 20).unwrap();
        let fast = op.apply(x.as_slice()).unwrap();
        let slow = naive_convolve(&psf, &x);
        assert!(
            max_abs_diff(&fast, slow.as_slice()) <= 1e-10,
            "psf {pr}x{pc}"
        );
    }
    assert!(make_convolution(&random_grid(&mut rng, 14, 3), 12, 20).is_err());
}

#[test]
fn gaussian_blur_of_full_size_psf_matches_direct_sum() {
    // 17x17 kernel on a 16x16 grid: the wrapped taps accumulate
    let psf = gaussian_psf(17, 2.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random_grid(&mut rng, 16, 16);
    let op = make_convolution(&psf, 16, 16).unwrap();
    let fast = op.apply(x.as_slice()).unwrap();
    assert!(max_abs_diff(&fast, naive_convolve(&psf, &x).as_slice()) <= 1e-10);
}

#[test]
fn norm_estimate_against_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let entries: Vec<f64> = (0..6 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dense = DenseOperator::new(6, 4, entries).unwrap();
    let sigma_max = to_matrix(&dense).singular_values().max();
    let est = operator_norm_estimate(&dense, 200, 1).unwrap();
    assert!(est <= sigma_max * (1.0 + 1e-12));
    assert!(
        (est - sigma_max).abs() <= 1e-8 * sigma_max,
        "{est} vs {sigma_max}"
    );

    let psf = random_grid(&mut rng, 3, 3);
    let conv = make_convolution(&psf, 8, 8).unwrap();
    let sigma_max = to_matrix(&conv).singular_values().max();
    let spectral_max = conv
        .kernel_spectrum()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max);
    assert!((sigma_max - spectral_max).abs() <= 1e-10 * sigma_max);
    let est = operator_norm_estimate(&conv, 500, 2).unwrap();
    assert!(
        (est - sigma_max).abs() <= 1e-6 * sigma_max,
        "{est} vs {sigma_max}"
    );
}

#[test]
fn convolution_matrix_is_transpose_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let psf = random_grid(&mut rng, 3, 5);
    let op = make_convolution(&psf, 6, 7).unwrap();
    let a = to_matrix(&op);
    let mut at = DMatrix::zeros(42, 42);
    for j in 0..42 {
        let mut e = vec![0.0; 42];
        e[j] = 1.0;
        let col = op.apply_adjoint(&e).unwrap();
        for i in 0..42 {
            at[(i, j)] = col[i];
        }
    }
    assert!((a.transpose() - at).abs().max() <= 1e-12);
}

fn dense_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1usize..8, 1usize..8).prop_flat_map(|(r, c)| {
        (
            Just(r),
            Just(c),
            prop::collection::vec(-10.0..10.0f64, r * c),
            prop::collection::vec(-10.0..10.0f64, c),
            prop::collection::vec(-10.0..10.0f64, r),
        )
    })
}

fn adjoint_gap(op: &dyn LinearOperator, x: &[f64], y: &[f64]) -> f64 {
    let ax = op.apply(x).unwrap();
    let aty = op.apply_adjoint(y).unwrap();
    let lhs: f64 = ax.iter().zip(y).map(|(a, b)| a * b).sum();
    let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    (lhs - rhs).abs() / (1.0 + nx * ny)
}

proptest! {
    #[test]
    fn dense_adjoint_consistency((r, c, entries, x, y) in dense_strategy()) {
        let op = DenseOperator::new(r, c, entries).unwrap();
        prop_assert!(adjoint_gap(&op, &x, &y) <= 1e-10);
    }

    #[test]
    fn convolution_adjoint_consistency(
        seed in any::<u64>(),
        h in 2usize..12,
        w in 2usize..12,
        pr in 1usize..6,
        pc in 1usize..6,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psf = random_grid(&mut rng, pr.min(h + 1), pc.min(w + 1));
        let op = make_convolution(&psf, h, w).unwrap();
        let x = random_grid(&mut rng, h, w);
        let y = random_grid(&mut rng, h, w);
        prop_assert!(adjoint_gap(&op, x.as_slice(), y.as_slice()) <= 1e-10);
    }

    #[test]
    fn diagonal_adjoint_is_itself(d in prop::collection::vec(-5.0..5.0f64, 1..20)) {
        let op = DiagonalOperator::new(d.clone()).unwrap();
        let x: Vec<f64> = (0..d.len()).map(|i| i as f64 - 3.0).collect();
        prop_assert_eq!(op.apply(&x).unwrap(), op.apply_adjoint(&x).unwrap());
    }

    #[test]
    fn norm_estimate_never_exceeds_svd(seed in any::<u64>(), r in 1usize..6, c in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries: Vec<f64> = (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let op = DenseOperator::new(r, c, entries).unwrap();
        let sigma = to_matrix(&op).singular_values().max();
        let est = operator_norm_estimate(&op, 20, seed).unwrap();
        prop_assert!(est <= sigma * (1.0 + 1e-10) + 1e-14);
    }
}
