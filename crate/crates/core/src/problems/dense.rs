use std::sync::Arc;

use super::{NoiseKind, Problem};
use crate::error::{invalid, Result};
use crate::linop::DenseOperator;

/// Unknowns of the default dense test problem.
pub const DENSE_TEST_DIM: usize = 24;

const KERNEL_WIDTH: f64 = 0.06;

/// Midpoint-rule discretization of a Gaussian smoothing kernel on `[0, 1]`,
/// a mildly ill-conditioned first-kind integral operator.
pub fn dense_test_operator(n: usize) -> Result<DenseOperator> {
    if n < 2 {
        return Err(invalid("n", "dense test operator needs n >= 2"));
    }
    let h = 1.0 / n as f64;
    let c = 1.0 / (KERNEL_WIDTH * (2.0 * std::f64::consts::PI).sqrt());
    let mut entries = Vec::with_capacity(n * n);
    for i in 0..n {
        let ti = (i as f64 + 0.5) * h;
        for j in 0..n {
            let tj = (j as f64 + 0.5) * h;
            let s = (ti - tj) / KERNEL_WIDTH;
            entries.push(h * c * (-0.5 * s * s).exp());
        }
    }
    DenseOperator::new(n, n, entries)
}

/// Smooth hump plus a plateau with jumps.
fn dense_truth(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = (i as f64 + 0.5) / n as f64;
            let plateau = if (0.55..0.8).contains(&t) { 1.0 } else { 0.0 };
            0.5 * (std::f64::consts::PI * t).sin() + plateau
        })
        .collect()
}

/// The `DENSE_TEST_DIM`-dimensional test problem with Gaussian noise.
pub fn dense_test_problem(noise_level: f64, seed: u64) -> Result<Problem> {
    dense_test_problem_with(noise_level, NoiseKind::Gaussian, seed)
}

pub fn dense_test_problem_with(noise_level: f64, kind: NoiseKind, seed: u64) -> Result<Problem> {
    let n = DENSE_TEST_DIM;
    Problem::with_noise(
        Arc::new(dense_test_operator(n)?),
        dense_truth(n),
        noise_level,
        kind,
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::LinearOperator;

    #[test]
    fn symmetric_and_positive() {
        let a = dense_test_operator(10).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                assert_eq!(a.entry(i, j), a.entry(j, i));
                assert!(a.entry(i, j) > 0.0);
            }
        }
        let p = dense_test_problem(0.01, 1).unwrap();
        assert_eq!(p.operator.domain_dim(), DENSE_TEST_DIM);
        assert!(p.delta > 0.0);
    }
}
