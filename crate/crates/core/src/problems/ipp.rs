//! Inverse potential problem on the unit square: recover a piecewise
//! constant source `x` in `−Δu = x`, `u|∂Ω = 0`, from the Neumann trace
//! `∂u/∂ν` on the boundary. Discretized with the 5-point Laplacian.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{NoiseKind, Problem};
use crate::error::{check_dim, invalid, Error, Result};
use crate::grid::Grid;
use crate::linop::DenseOperator;

const MAX_UNKNOWNS: usize = 4096;
const MAX_GRID: usize = 512;

/// Fast Dirichlet Poisson solver on an `m × m` interior grid with spacing
/// `h = 1/(m+1)`, diagonalizing the 5-point Laplacian with the discrete
/// sine transform (applied as a dense `m × m` matrix).
#[derive(Clone, Debug)]
pub struct PoissonSolver {
    m: usize,
    sine: Vec<f64>,
    eig: Vec<f64>,
}

fn matmul(a: &[f64], b: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        let row = &mut out[i * m..(i + 1) * m];
        for k in 0..m {
            let aik = a[i * m + k];
            if aik == 0.0 {
                continue;
            }
            for (o, bkj) in row.iter_mut().zip(&b[k * m..(k + 1) * m]) {
                *o += aik * bkj;
            }
        }
    }
    out
}

impl PoissonSolver {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(invalid("grid size", format!("need m >= 2, got {m}")));
        }
        if m > MAX_GRID {
            return Err(Error::ResourceLimit(format!(
                "grid m = {m} exceeds {MAX_GRID}"
            )));
        }
        let np1 = (m + 1) as f64;
        let h = 1.0 / np1;
        let mut sine = vec![0.0; m * m];
        for j in 0..m {
            for k in 0..m {
                sine[j * m + k] =
                    ((j + 1) as f64 * (k + 1) as f64 * std::f64::consts::PI / np1).sin();
            }
        }
        let eig = (1..=m)
            .map(|k| {
                let s = (k as f64 * std::f64::consts::PI / (2.0 * np1)).sin();
                4.0 * s * s / (h * h)
            })
            .collect();
        Ok(Self { m, sine, eig })
    }

    pub fn grid_size(&self) -> usize {
        self.m
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.m + 1) as f64
    }

    /// Interior solution (row-major `m × m`) for an interior source.
    pub fn solve_interior(&self, source: &[f64]) -> Result<Vec<f64>> {
        let m = self.m;
        check_dim("poisson source", m * m, source.len())?;
        if source.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("poisson source".into()));
        }
        let mut spec = matmul(&matmul(&self.sine, source, m), &self.sine, m);
        let norm = (2.0 / (m + 1) as f64).powi(2);
        for k in 0..m {
            for l in 0..m {
                spec[k * m + l] *= norm / (self.eig[k] + self.eig[l]);
            }
        }
        Ok(matmul(&matmul(&self.sine, &spec, m), &self.sine, m))
    }

    /// Potential on the full `(m+2) × (m+2)` grid including the zero
    /// boundary layer. Row index runs along the second coordinate.
    pub fn solve(&self, source: &Grid) -> Result<Grid> {
        let m = self.m;
        if source.rows() != m || source.cols() != m {
            return Err(invalid(
                "poisson source",
                format!(
                    "expected {m}x{m} interior grid, got {}x{}",
                    source.rows(),
                    source.cols()
                ),
            ));
        }
        let inner = self.solve_interior(source.as_slice())?;
        let mut u = Grid::zeros(m + 2, m + 2);
        for i in 0..m {
            for j in 0..m {
                u.set(i + 1, j + 1, inner[i * m + j]);
            }
        }
        Ok(u)
    }
}

/// Solves the 5-point discretization of `−Δu = source` with `u = 0` on the
/// boundary of the unit square. `source` holds the `m × m` interior values.
pub fn poisson_solve_fd(source: &Grid) -> Result<Grid> {
    if source.rows() != source.cols() {
        return Err(invalid("poisson source", "grid must be square"));
    }
    PoissonSolver::new(source.rows())?.solve(source)
}

/// Second-order one-sided outward normal derivative at every boundary grid
/// point (corners excluded), ordered counterclockwise: bottom edge
/// left→right, right edge bottom→top, top edge right→left, left edge
/// top→bottom. Row 0 of `u` is the bottom edge.
pub fn neumann_trace_fd(u: &Grid) -> Result<Vec<f64>> {
    let n = u.rows();
    if u.cols() != n || n < 4 {
        return Err(invalid(
            "potential",
            "expected a square grid with at least 2 interior points",
        ));
    }
    let m = n - 2;
    let h = 1.0 / (m + 1) as f64;
    // boundary value, first and second inward neighbour
    let d = |u0: f64, u1: f64, u2: f64| (3.0 * u0 - 4.0 * u1 + u2) / (2.0 * h);
    let mut trace = Vec::with_capacity(4 * m);
    for j in 1..=m {
        trace.push(d(u.get(0, j), u.get(1, j), u.get(2, j)));
    }
    for i in 1..=m {
        trace.push(d(u.get(i, m + 1), u.get(i, m), u.get(i, m - 1)));
    }
    for j in (1..=m).rev() {
        trace.push(d(u.get(m + 1, j), u.get(m, j), u.get(m - 1, j)));
    }
    for i in (1..=m).rev() {
        trace.push(d(u.get(i, 0), u.get(i, 1), u.get(i, 2)));
    }
    Ok(trace)
}

/// Index of the coarse cell containing fine-grid interior node `i` (1-based).
fn cell_of(node: usize, m: usize, cells: usize) -> usize {
    let pos = node as f64 / (m + 1) as f64;
    ((pos * cells as f64) as usize).min(cells - 1)
}

/// Indicator of coarse cell `(row, col)` sampled on the fine interior grid.
fn cell_indicator(row: usize, col: usize, cells: usize, m: usize) -> Grid {
    Grid::from_fn(m, m, |i, j| {
        (cell_of(i + 1, m, cells) == row && cell_of(j + 1, m, cells) == col) as u8 as f64
    })
}

fn check_sizes(cells: usize, m: usize) -> Result<()> {
    if cells == 0 {
        return Err(invalid("n_cells_per_side", "must be positive"));
    }
    if cells * cells > MAX_UNKNOWNS {
        return Err(Error::ResourceLimit(format!(
            "{} unknowns exceed {MAX_UNKNOWNS}",
            cells * cells
        )));
    }
    if m < 2 * cells {
        return Err(invalid(
            "fd_grid_m",
            format!("fine grid m = {m} must be at least twice the cell count {cells}"),
        ));
    }
    Ok(())
}

/// Dense forward map from the `cells²` piecewise-constant source values
/// (row-major, row = second coordinate) to the `4m` Neumann trace values.
/// Column `i` is the trace of the potential generated by cell indicator `i`.
pub fn assemble_ipp_operator(n_cells_per_side: usize, fd_grid_m: usize) -> Result<DenseOperator> {
    check_sizes(n_cells_per_side, fd_grid_m)?;
    let solver = PoissonSolver::new(fd_grid_m)?;
    let n = n_cells_per_side;
    let columns: Vec<Vec<f64>> = (0..n * n)
        .into_par_iter()
        .map(|c| {
            let chi = cell_indicator(c / n, c % n, n, fd_grid_m);
            neumann_trace_fd(&solver.solve(&chi)?)
        })
        .collect::<Result<_>>()?;
    DenseOperator::from_columns(4 * fd_grid_m, &columns)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub a0: f64,
    pub a1: f64,
    pub b0: f64,
    pub b1: f64,
    pub value: f64,
}

/// Piecewise-constant source, evaluated at coarse-cell centers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum IppPhantom {
    Constant(f64),
    /// Rectangles painted over a background; later ones win.
    Inclusions {
        background: f64,
        rects: Vec<Rect>,
    },
}

impl Default for IppPhantom {
    /// Raised rectangle (value 2) on a unit background.
    fn default() -> Self {
        Self::Inclusions {
            background: 1.0,
            rects: vec![Rect {
                a0: 0.25,
                a1: 0.65,
                b0: 0.35,
                b1: 0.75,
                value: 2.0,
            }],
        }
    }
}

impl IppPhantom {
    pub fn coefficients(&self, cells: usize) -> Vec<f64> {
        let mut x = Vec::with_capacity(cells * cells);
        for row in 0..cells {
            let b = (row as f64 + 0.5) / cells as f64;
            for col in 0..cells {
                let a = (col as f64 + 0.5) / cells as f64;
                x.push(match self {
                    Self::Constant(c) => *c,
                    Self::Inclusions { background, rects } => rects
                        .iter()
                        .rev()
                        .find(|r| (r.a0..r.a1).contains(&a) && (r.b0..r.b1).contains(&b))
                        .map_or(*background, |r| r.value),
                });
            }
        }
        x
    }
}

pub fn make_ipp_problem(
    phantom: &IppPhantom,
    n_cells_per_side: usize,
    fd_grid_m: usize,
    noise_level: f64,
    noise_kind: NoiseKind,
    seed: u64,
) -> Result<Problem> {
    let op = assemble_ipp_operator(n_cells_per_side, fd_grid_m)?;
    let truth = phantom.coefficients(n_cells_per_side);
    Problem::with_noise(Arc::new(op), truth, noise_level, noise_kind, seed)
}
