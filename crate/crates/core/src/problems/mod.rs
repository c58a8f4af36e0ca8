//! Benchmark problems: image deblurring, the inverse potential problem on a
//! finite-difference grid, and a small dense first-kind integral equation.

mod deblur;
mod dense;
mod image;
mod ipp;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

pub use deblur::{gaussian_psf, make_deblurring_problem};
pub use dense::{dense_test_operator, dense_test_problem, dense_test_problem_with, DENSE_TEST_DIM};
pub use image::{load_pgm, make_phantom_image, parse_pgm};
pub use ipp::{
    assemble_ipp_operator, make_ipp_problem, neumann_trace_fd, poisson_solve_fd, IppPhantom,
    PoissonSolver, Rect,
};

use crate::error::{check_dim, invalid, Result};
use crate::linop::LinearOperator;
use crate::vector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseKind {
    /// i.i.d. entries on `[−1, 1]` before scaling.
    Uniform,
    /// i.i.d. standard normal entries before scaling.
    Gaussian,
}

impl NoiseKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Some(Self::Uniform),
            "gaussian" | "normal" => Some(Self::Gaussian),
            _ => None,
        }
    }
}

/// Noise vector with `‖e‖ = level · ‖exact‖`.
///
/// The raw draw depends only on `(kind, seed, len)`, so different levels
/// with the same seed share one noise direction.
pub fn noise_vector(exact: &[f64], level: f64, kind: NoiseKind, seed: u64) -> Result<Vec<f64>> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(invalid(
            "noise_level",
            format!("must be finite and nonnegative, got {level}"),
        ));
    }
    if level == 0.0 {
        return Ok(vec![0.0; exact.len()]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e: Vec<f64> = match kind {
        NoiseKind::Uniform => {
            let u = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
            (0..exact.len()).map(|_| u.sample(&mut rng)).collect()
        }
        NoiseKind::Gaussian => (0..exact.len())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect(),
    };
    let raw = vector::norm(&e);
    let target = level * vector::norm(exact);
    if raw == 0.0 || target == 0.0 {
        return Ok(vec![0.0; exact.len()]);
    }
    let s = target / raw;
    e.iter_mut().for_each(|v| *v *= s);
    Ok(e)
}

/// Operator, ground truth `x⋆`, exact data `y = A x⋆`, noisy data `y^δ`
/// and noise level `δ`.
#[derive(Clone, Debug)]
pub struct Problem {
    pub operator: Arc<dyn LinearOperator>,
    pub ground_truth: Vec<f64>,
    pub exact_data: Vec<f64>,
    pub noisy_data: Vec<f64>,
    /// Measured `‖y^δ − y‖`.
    pub delta: f64,
    /// Requested `noise_level · ‖y‖`.
    pub nominal_delta: f64,
    /// `(rows, cols)` when unknowns are pixels.
    pub image_shape: Option<(usize, usize)>,
}

impl Problem {
    /// Generates data from `ground_truth` and adds scaled noise.
    pub fn with_noise(
        operator: Arc<dyn LinearOperator>,
        ground_truth: Vec<f64>,
        noise_level: f64,
        kind: NoiseKind,
        seed: u64,
    ) -> Result<Self> {
        check_dim("ground truth", operator.domain_dim(), ground_truth.len())?;
        if !vector::all_finite(&ground_truth) {
            return Err(invalid("ground_truth", "non-finite entries"));
        }
        let exact_data = operator.apply(&ground_truth)?;
        let noise = noise_vector(&exact_data, noise_level, kind, seed)?;
        let noisy_data = vector::add(&exact_data, &noise);
        let delta = vector::dist(&noisy_data, &exact_data);
        let nominal_delta = noise_level * vector::norm(&exact_data);
        Ok(Self {
            operator,
            ground_truth,
            exact_data,
            noisy_data,
            delta,
            nominal_delta,
            image_shape: None,
        })
    }

    /// Noise-free problem, `δ = 0`.
    pub fn exact(operator: Arc<dyn LinearOperator>, ground_truth: Vec<f64>) -> Result<Self> {
        Self::with_noise(operator, ground_truth, 0.0, NoiseKind::Gaussian, 0)
    }

    /// Uses `noise_level · ‖y‖` in the stopping rule instead of the measured norm.
    pub fn use_nominal_delta(&mut self) {
        self.delta = self.nominal_delta;
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(
            "ground truth",
            self.operator.domain_dim(),
            self.ground_truth.len(),
        )?;
        check_dim(
            "exact data",
            self.operator.range_dim(),
            self.exact_data.len(),
        )?;
        check_dim(
            "noisy data",
            self.operator.range_dim(),
            self.noisy_data.len(),
        )?;
        if !(self.delta >= 0.0) {
            return Err(invalid("delta", "noise level must be nonnegative"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::DiagonalOperator;
    use approx::assert_relative_eq;

    #[test]
    fn delta_is_measured_noise_norm() {
        let op =
            Arc::new(DiagonalOperator::new((1..=50).map(|i| i as f64 / 50.0).collect()).unwrap());
        for kind in [NoiseKind::Uniform, NoiseKind::Gaussian] {
            let p = Problem::with_noise(op.clone(), vec![1.0; 50], 0.03, kind, 9).unwrap();
            let d = vector::dist(&p.noisy_data, &p.exact_data);
            assert_relative_eq!(d, p.delta, max_relative = 1e-12);
            assert_relative_eq!(
                p.delta,
                0.03 * vector::norm(&p.exact_data),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn zero_noise() {
        let op = Arc::new(DiagonalOperator::new(vec![2.0, 3.0]).unwrap());
        let p = Problem::with_noise(op, vec![1.0, 1.0], 0.0, NoiseKind::Uniform, 1).unwrap();
        assert_eq!(p.delta, 0.0);
        assert_eq!(p.noisy_data, p.exact_data);
    }

    #[test]
    fn uniform_noise_is_bounded_before_scaling() {
        let e = noise_vector(&[1.0; 100], 1.0, NoiseKind::Uniform, 3).unwrap();
        assert_relative_eq!(vector::norm(&e), 10.0, max_relative = 1e-12);
        assert!(noise_vector(&[1.0], -0.1, NoiseKind::Uniform, 3).is_err());
    }

    #[test]
    fn same_seed_same_direction() {
        let y = vec![1.0; 30];
        let a = noise_vector(&y, 0.1, NoiseKind::Gaussian, 5).unwrap();
        let b = noise_vector(&y, 0.2, NoiseKind::Gaussian, 5).unwrap();
        for (x, z) in a.iter().zip(&b) {
            assert_relative_eq!(2.0 * x, *z, max_relative = 1e-12);
        }
    }
}
