//! Solvers for the regularized normal equations `(λ A*A + I) x = rhs`.

use crate::error::{check_dim, invalid, Error, Result};
use crate::linop::{Convolution2D, LinearOperator};
use crate::vector;

#[derive(Clone, Debug)]
pub struct InnerSolveReport {
    pub solution: Vec<f64>,
    /// Applications of `λ A*A + I` performed inside the CG loop.
    pub iterations: usize,
    pub final_residual_norm: f64,
    /// False when `max_iter` was hit before the tolerance was met.
    pub converged: bool,
}

/// CG's finite-termination bound, used when no cap is configured.
pub fn default_max_iter<A: LinearOperator + ?Sized>(op: &A) -> usize {
    op.domain_dim().max(1)
}

/// `out ← λ A*(A v) + v`
fn apply_system<A: LinearOperator + ?Sized>(
    op: &A,
    lambda: f64,
    v: &[f64],
    scratch: &mut [f64],
    out: &mut [f64],
) {
    op.forward_into(v, scratch);
    op.adjoint_into(scratch, out);
    for (o, vi) in out.iter_mut().zip(v) {
        *o = lambda * *o + vi;
    }
}

/// Conjugate gradients on `v ↦ λ A*(A v) + v`.
///
/// Stops once the recursively updated residual satisfies
/// `‖r‖ ≤ tol · ‖rhs‖` or after `max_iter` iterations.
pub fn cg_solve<A: LinearOperator + ?Sized>(
    op: &A,
    lambda: f64,
    rhs: &[f64],
    x_init: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<InnerSolveReport> {
    let n = op.domain_dim();
    check_dim("cg_solve rhs", n, rhs.len())?;
    check_dim("cg_solve x_init", n, x_init.len())?;
    if !(tol > 0.0) {
        return Err(invalid("tol", format!("must be positive, got {tol}")));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid(
            "lambda",
            format!("must be finite and nonnegative, got {lambda}"),
        ));
    }
    if !vector::all_finite(rhs) || !vector::all_finite(x_init) {
        return Err(Error::NonFinite("cg_solve input".into()));
    }

    let rhs_norm = vector::norm(rhs);
    if rhs_norm == 0.0 {
        return Ok(InnerSolveReport {
            solution: vec![0.0; n],
            iterations: 0,
            final_residual_norm: 0.0,
            converged: true,
        });
    }
    let threshold = tol * rhs_norm;

    let mut scratch = vec![0.0; op.range_dim()];
    let mut gp = vec![0.0; n];
    let mut x = x_init.to_vec();
    let mut r = rhs.to_vec();
    if x.iter().any(|&v| v != 0.0) {
        apply_system(op, lambda, &x, &mut scratch, &mut gp);
        vector::axpy(-1.0, &gp, &mut r);
    }
    let mut p = r.clone();
    let mut rr = vector::norm_sq(&r);
    let mut iterations = 0;

    while rr.sqrt() > threshold && iterations < max_iter {
        apply_system(op, lambda, &p, &mut scratch, &mut gp);
        iterations += 1;
        let pgp = vector::dot(&p, &gp);
        if !pgp.is_finite() {
            return Err(Error::NonFinite(format!("cg_solve iteration {iterations}")));
        }
        if pgp <= 0.0 {
            // exact solution already reached in this Krylov direction
            break;
        }
        let step = rr / pgp;
        vector::axpy(step, &p, &mut x);
        vector::axpy(-step, &gp, &mut r);
        let rr_next = vector::norm_sq(&r);
        if !rr_next.is_finite() {
            return Err(Error::NonFinite(format!("cg_solve iteration {iterations}")));
        }
        let beta = rr_next / rr;
        rr = rr_next;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }

    let final_residual_norm = rr.sqrt();
    Ok(InnerSolveReport {
        solution: x,
        iterations,
        final_residual_norm,
        converged: final_residual_norm <= threshold,
    })
}

/// Exact solve for a circular convolution: `x̂ = r̂ / (λ|K̂|² + 1)`.
pub fn spectral_solve(op: &Convolution2D, lambda: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    check_dim("spectral_solve rhs", op.domain_dim(), rhs.len())?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid(
            "lambda",
            format!("must be finite and nonnegative, got {lambda}"),
        ));
    }
    let mut out = vec![0.0; rhs.len()];
    op.filter_into(rhs, &mut out, |k, s| s / (lambda * k.norm_sqr() + 1.0));
    if !vector::all_finite(&out) {
        return Err(Error::NonFinite("spectral_solve output".into()));
    }
    Ok(out)
}

/// Residual norm `‖λ A*(A x) + x − rhs‖`, evaluated directly.
pub fn system_residual<A: LinearOperator + ?Sized>(
    op: &A,
    lambda: f64,
    x: &[f64],
    rhs: &[f64],
) -> Result<f64> {
    check_dim("system_residual x", op.domain_dim(), x.len())?;
    check_dim("system_residual rhs", op.domain_dim(), rhs.len())?;
    let mut scratch = vec![0.0; op.range_dim()];
    let mut gx = vec![0.0; x.len()];
    apply_system(op, lambda, x, &mut scratch, &mut gx);
    Ok(vector::dist(&gx, rhs))
}
