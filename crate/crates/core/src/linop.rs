//! Matrix-free linear operators.
//!
//! Every operator maps coordinate vectors of length `domain_dim` to vectors of
//! length `range_dim` and carries its Euclidean adjoint. Operators are
//! immutable after construction, so a shared reference may be applied from
//! several threads at once.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_dim, invalid, Result};
use crate::grid::Grid;
use crate::vector;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    Dense,
    Diagonal,
    Convolution2d,
    Composite,
}

pub trait LinearOperator: Send + Sync + fmt::Debug {
    fn domain_dim(&self) -> usize;
    fn range_dim(&self) -> usize;
    fn kind(&self) -> OperatorKind;

    /// `out ← A x`. Lengths are checked by [`LinearOperator::apply`].
    fn forward_into(&self, x: &[f64], out: &mut [f64]);

    /// `out ← A* y`. Lengths are checked by [`LinearOperator::apply_adjoint`].
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("apply", self.domain_dim(), x.len())?;
        let mut out = vec![0.0; self.range_dim()];
        self.forward_into(x, &mut out);
        Ok(out)
    }

    fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim("apply_adjoint", self.range_dim(), y.len())?;
        let mut out = vec![0.0; self.domain_dim()];
        self.adjoint_into(y, &mut out);
        Ok(out)
    }

    /// Downcast used to pick the frequency-domain inner solver.
    fn as_convolution(&self) -> Option<&Convolution2D> {
        None
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for Box<T> {
    fn domain_dim(&self) -> usize {
        (**self).domain_dim()
    }
    fn range_dim(&self) -> usize {
        (**self).range_dim()
    }
    fn kind(&self) -> OperatorKind {
        (**self).kind()
    }
    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).forward_into(x, out)
    }
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        (**self).adjoint_into(y, out)
    }
    fn as_convolution(&self) -> Option<&Convolution2D> {
        (**self).as_convolution()
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for Arc<T> {
    fn domain_dim(&self) -> usize {
        (**self).domain_dim()
    }
    fn range_dim(&self) -> usize {
        (**self).range_dim()
    }
    fn kind(&self) -> OperatorKind {
        (**self).kind()
    }
    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).forward_into(x, out)
    }
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        (**self).adjoint_into(y, out)
    }
    fn as_convolution(&self) -> Option<&Convolution2D> {
        (**self).as_convolution()
    }
}

/// Explicit `range_dim × domain_dim` matrix, stored row-major.
#[derive(Clone, Debug)]
pub struct DenseOperator {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl DenseOperator {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid(
                "entries",
                "dense operator needs positive dimensions",
            ));
        }
        check_dim("DenseOperator::new", rows * cols, entries.len())?;
        if !vector::all_finite(&entries) {
            return Err(invalid("entries", "matrix contains non-finite values"));
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut entries = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim("DenseOperator::from_rows", cols, r.len())?;
            entries.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, entries)
    }

    /// Builds the matrix column by column.
    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let mut entries = vec![0.0; rows * cols];
        for (j, c) in columns.iter().enumerate() {
            check_dim("DenseOperator::from_columns", rows, c.len())?;
            for (i, v) in c.iter().enumerate() {
                entries[i * cols + j] = *v;
            }
        }
        Self::new(rows, cols, entries)
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self::new(n, n, entries)
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.entry(i, j)).collect()
    }
}

impl LinearOperator for DenseOperator {
    fn domain_dim(&self) -> usize {
        self.cols
    }
    fn range_dim(&self) -> usize {
        self.rows
    }
    fn kind(&self) -> OperatorKind {
        OperatorKind::Dense
    }

    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.entries.chunks_exact(self.cols)) {
            *o = vector::dot(row, x);
        }
    }

    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (yi, row) in y.iter().zip(self.entries.chunks_exact(self.cols)) {
            vector::axpy(*yi, row, out);
        }
    }
}

#[derive(Clone, Debug)]
pub struct DiagonalOperator {
    diag: Vec<f64>,
}

impl DiagonalOperator {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(invalid(
                "diag",
                "diagonal operator needs at least one entry",
            ));
        }
        if !vector::all_finite(&diag) {
            return Err(invalid("diag", "non-finite diagonal entry"));
        }
        Ok(Self { diag })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n])
    }

    pub fn zero(n: usize) -> Result<Self> {
        Self::new(vec![0.0; n])
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }
}

impl LinearOperator for DiagonalOperator {
    fn domain_dim(&self) -> usize {
        self.diag.len()
    }
    fn range_dim(&self) -> usize {
        self.diag.len()
    }
    fn kind(&self) -> OperatorKind {
        OperatorKind::Diagonal
    }
    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, d), v) in out.iter_mut().zip(&self.diag).zip(x) {
            *o = d * v;
        }
    }
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        self.forward_into(y, out)
    }
}

/// `outer ∘ inner`.
#[derive(Debug)]
pub struct CompositeOperator {
    outer: Box<dyn LinearOperator>,
    inner: Box<dyn LinearOperator>,
}

impl CompositeOperator {
    pub fn new(outer: Box<dyn LinearOperator>, inner: Box<dyn LinearOperator>) -> Result<Self> {
        check_dim(
            "CompositeOperator::new",
            outer.domain_dim(),
            inner.range_dim(),
        )?;
        Ok(Self { outer, inner })
    }
}

impl LinearOperator for CompositeOperator {
    fn domain_dim(&self) -> usize {
        self.inner.domain_dim()
    }
    fn range_dim(&self) -> usize {
        self.outer.range_dim()
    }
    fn kind(&self) -> OperatorKind {
        OperatorKind::Composite
    }
    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        let mut mid = vec![0.0; self.inner.range_dim()];
        self.inner.forward_into(x, &mut mid);
        self.outer.forward_into(&mid, out);
    }
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        let mut mid = vec![0.0; self.outer.domain_dim()];
        self.outer.adjoint_into(y, &mut mid);
        self.inner.adjoint_into(&mid, out);
    }
}

/// Circular 2-D convolution on a `height × width` image, applied through
/// the FFT. Images are flattened row-major.
#[derive(Clone)]
pub struct Convolution2D {
    height: usize,
    width: usize,
    spectrum: Vec<Complex64>,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Convolution2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Convolution2D")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish_non_exhaustive()
    }
}

/// Builds the circular convolution operator for `psf` on a
/// `height × width` grid.
///
/// The PSF center pixel (`rows/2`, `cols/2`) lands on index `(0, 0)`; taps
/// that fall outside the grid wrap around periodically and accumulate. A
/// PSF may exceed the image by at most one pixel per axis (so a `257 × 257`
/// kernel fits a `256 × 256` image).
pub fn make_convolution(psf: &Grid, height: usize, width: usize) -> Result<Convolution2D> {
    if height == 0 || width == 0 {
        return Err(invalid("image dimensions", "must be positive"));
    }
    if psf.is_empty() {
        return Err(invalid("psf", "empty kernel"));
    }
    if psf.rows() > height + 1 || psf.cols() > width + 1 {
        return Err(invalid(
            "psf",
            format!(
                "{}x{} kernel does not fit the {}x{} periodic grid",
                psf.rows(),
                psf.cols(),
                height,
                width
            ),
        ));
    }
    if !vector::all_finite(psf.as_slice()) {
        return Err(invalid("psf", "non-finite kernel entry"));
    }

    let (ci, cj) = (psf.rows() / 2, psf.cols() / 2);
    let mut embedded = vec![0.0; height * width];
    for i in 0..psf.rows() {
        let r = (i as isize - ci as isize).rem_euclid(height as isize) as usize;
        for j in 0..psf.cols() {
            let c = (j as isize - cj as isize).rem_euclid(width as isize) as usize;
            embedded[r * width + c] += psf.get(i, j);
        }
    }

    let mut planner = FftPlanner::new();
    let mut op = Convolution2D {
        height,
        width,
        spectrum: Vec::new(),
        row_fwd: planner.plan_fft_forward(width),
        row_inv: planner.plan_fft_inverse(width),
        col_fwd: planner.plan_fft_forward(height),
        col_inv: planner.plan_fft_inverse(height),
    };
    op.spectrum = op.forward_transform(&embedded);
    Ok(op)
}

impl Convolution2D {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// DFT of the embedded kernel.
    pub fn kernel_spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    fn transform_in_place(&self, buf: &mut [Complex64], inverse: bool) {
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        for r in buf.chunks_exact_mut(self.width) {
            row.process(r);
        }
        let mut column = vec![Complex64::new(0.0, 0.0); self.height];
        for j in 0..self.width {
            for i in 0..self.height {
                column[i] = buf[i * self.width + j];
            }
            col.process(&mut column);
            for i in 0..self.height {
                buf[i * self.width + j] = column[i];
            }
        }
    }

    pub(crate) fn forward_transform(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform_in_place(&mut buf, false);
        buf
    }

    /// Inverse DFT, keeping the real part. The imaginary part is round-off
    /// for every spectrum produced by the operators in this crate.
    pub(crate) fn inverse_transform_real(&self, mut spec: Vec<Complex64>, out: &mut [f64]) {
        self.transform_in_place(&mut spec, true);
        let scale = 1.0 / (self.height * self.width) as f64;
        for (o, c) in out.iter_mut().zip(&spec) {
            *o = c.re * scale;
        }
    }

    /// Multiplies in frequency space: `out = F⁻¹[f(K̂, x̂)]`.
    pub(crate) fn filter_into(
        &self,
        x: &[f64],
        out: &mut [f64],
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) {
        let mut spec = self.forward_transform(x);
        for (s, k) in spec.iter_mut().zip(&self.spectrum) {
            *s = f(*k, *s);
        }
        self.inverse_transform_real(spec, out);
    }
}

impl LinearOperator for Convolution2D {
    fn domain_dim(&self) -> usize {
        self.height * self.width
    }
    fn range_dim(&self) -> usize {
        self.height * self.width
    }
    fn kind(&self) -> OperatorKind {
        OperatorKind::Convolution2d
    }
    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        self.filter_into(x, out, |k, s| k * s)
    }
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        self.filter_into(y, out, |k, s| k.conj() * s)
    }
    fn as_convolution(&self) -> Option<&Convolution2D> {
        Some(self)
    }
}

/// Estimates `‖A‖` by power iteration on `A*A` from a seeded random start.
///
/// The estimate after `i` sweeps is `sqrt(‖A*A v‖)` for the current unit
/// vector `v`; it never exceeds `‖A‖` and is non-decreasing in `iters`.
pub fn operator_norm_estimate<A: LinearOperator + ?Sized>(
    op: &A,
    iters: usize,
    seed: u64,
) -> Result<f64> {
    if iters == 0 {
        return Err(invalid("iters", "power iteration needs at least one sweep"));
    }
    let n = op.domain_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let nv = vector::norm(&v);
    if nv == 0.0 {
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|e| *e /= nv);
    }

    let mut av = vec![0.0; op.range_dim()];
    let mut u = vec![0.0; n];
    let mut estimate = 0.0;
    for _ in 0..iters {
        op.forward_into(&v, &mut av);
        op.adjoint_into(&av, &mut u);
        let nu = vector::norm(&u);
        if nu == 0.0 {
            return Ok(0.0);
        }
        estimate = f64::max(estimate, nu.sqrt());
        for (vi, ui) in v.iter_mut().zip(&u) {
            *vi = ui / nu;
        }
    }
    Ok(estimate)
}
