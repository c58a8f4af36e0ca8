use std::sync::Arc;

use super::{NoiseKind, Problem};
use crate::error::{invalid, Result};
use crate::grid::Grid;
use crate::linop::make_convolution;
use crate::vector;

/// Rotationally symmetric Gaussian kernel on a `size × size` grid, centered
/// on the middle pixel and normalized to unit sum.
pub fn gaussian_psf(size: usize, sigma: f64) -> Result<Grid> {
    if size.is_multiple_of(2) {
        return Err(invalid("psf size", format!("must be odd, got {size}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid("sigma", format!("must be positive, got {sigma}")));
    }
    let c = (size / 2) as f64;
    let mut psf = Grid::from_fn(size, size, |i, j| {
        let (di, dj) = (i as f64 - c, j as f64 - c);
        (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp()
    });
    let total = psf.sum();
    psf.as_mut_slice().iter_mut().for_each(|v| *v /= total);
    Ok(psf)
}

/// Blurs `image` with `psf` (periodic boundary) and adds zero-mean Gaussian
/// noise with `‖e‖ = noise_level · ‖A x⋆‖`.
pub fn make_deblurring_problem(
    image: &Grid,
    psf: &Grid,
    noise_level: f64,
    seed: u64,
) -> Result<Problem> {
    if !vector::all_finite(image.as_slice()) {
        return Err(invalid("image", "non-finite pixel"));
    }
    let op = make_convolution(psf, image.rows(), image.cols())?;
    let mut p = Problem::with_noise(
        Arc::new(op),
        image.as_slice().to_vec(),
        noise_level,
        NoiseKind::Gaussian,
        seed,
    )?;
    p.image_shape = Some((image.rows(), image.cols()));
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn psf_properties() {
        assert_eq!(gaussian_psf(1, 2.0).unwrap().as_slice(), &[1.0]);
        for (size, sigma) in [(3, 0.5), (9, 2.0), (31, 4.0), (257, 4.0)] {
            let p = gaussian_psf(size, sigma).unwrap();
            assert_abs_diff_eq!(p.sum(), 1.0, epsilon = 1e-12);
            let c = size / 2;
            assert_eq!(p.get(c, c), p.max());
            for i in 0..size {
                for j in 0..size {
                    assert_eq!(p.get(i, j), p.get(size - 1 - i, size - 1 - j));
                    assert_eq!(p.get(i, j), p.get(j, i));
                }
            }
        }
        assert!(gaussian_psf(4, 1.0).is_err());
        assert!(gaussian_psf(5, 0.0).is_err());
    }

    #[test]
    fn noiseless_delta_psf_reproduces_image() {
        let img = Grid::from_fn(6, 5, |i, j| (i * 5 + j) as f64 / 30.0);
        let p = make_deblurring_problem(&img, &Grid::from_vec(1, 1, vec![1.0]), 0.0, 1).unwrap();
        assert_eq!(p.delta, 0.0);
        assert_eq!(p.noisy_data, p.exact_data);
        for (a, b) in p.noisy_data.iter().zip(img.as_slice()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        assert_eq!(p.image_shape, Some((6, 5)));
    }
}
