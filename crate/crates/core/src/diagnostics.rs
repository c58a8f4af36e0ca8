//! Numerical checks of the identities, inequalities and convergence trends
//! the inertial method is built on. Each check yields a [`CheckReport`].

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};
use crate::inner_solve::system_residual;
use crate::iterate::{
    extrapolate, run_init, run_init_from, tikhonov_step, IterationTrace, LambdaSchedule, Method,
    SolverConfig, StepSolve, StopReason,
};
use crate::linop::{DenseOperator, LinearOperator};
use crate::problems::{dense_test_problem, Problem};
use crate::vector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Passed,
    Failed,
    /// A failure that is explained by a loose inner solve.
    Inconclusive,
    /// The check does not apply to this run.
    Skipped,
    /// The inputs violate the hypothesis of the statement being checked.
    PreconditionViolated,
}

impl CheckStatus {
    pub fn name(self) -> &'static str {
        match self {
            Self::Passed => "PASS",
            Self::Failed => "FAIL",
            Self::Inconclusive => "INCONCLUSIVE",
            Self::Skipped => "SKIP",
            Self::PreconditionViolated => "PRECONDITION",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub status: CheckStatus,
    pub passed: bool,
    pub max_violation: f64,
    pub tolerance: f64,
    pub samples_checked: usize,
    /// First sample (or iteration index) that broke the check.
    pub failing_index: Option<usize>,
    pub detail: String,
}

impl CheckReport {
    fn from_violation(
        name: impl Into<String>,
        max_violation: f64,
        tolerance: f64,
        samples_checked: usize,
        failing_index: Option<usize>,
    ) -> Self {
        let passed = max_violation <= tolerance;
        Self {
            name: name.into(),
            status: if passed {
                CheckStatus::Passed
            } else {
                CheckStatus::Failed
            },
            passed,
            max_violation,
            tolerance,
            samples_checked,
            failing_index: if passed { None } else { failing_index },
            detail: String::new(),
        }
    }

    fn with_status(mut self, status: CheckStatus, detail: impl Into<String>) -> Self {
        self.status = status;
        self.passed = status == CheckStatus::Passed;
        self.detail = detail.into();
        self
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    /// Combines per-sample reports into one: worst violation, summed sample
    /// counts, first failing sample index.
    pub fn merge(name: impl Into<String>, reports: impl IntoIterator<Item = CheckReport>) -> Self {
        let mut max_violation: f64 = 0.0;
        let mut tolerance = 0.0;
        let mut samples = 0;
        let mut failing = None;
        let mut status = CheckStatus::Passed;
        for (i, r) in reports.into_iter().enumerate() {
            max_violation = max_violation.max(r.max_violation);
            tolerance = r.tolerance;
            samples += r.samples_checked;
            let rank = |s: CheckStatus| match s {
                CheckStatus::Passed | CheckStatus::Skipped => 0,
                CheckStatus::Inconclusive => 1,
                CheckStatus::PreconditionViolated => 2,
                CheckStatus::Failed => 3,
            };
            if rank(r.status) > 0 && failing.is_none() {
                failing = Some(i);
            }
            if rank(r.status) > rank(status) {
                status = r.status;
            }
        }
        Self {
            name: name.into(),
            status,
            passed: status == CheckStatus::Passed,
            max_violation,
            tolerance,
            samples_checked: samples,
            failing_index: failing,
            detail: String::new(),
        }
    }

    /// One-line JSON record.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    /// Counts as a hard failure for exit-status purposes.
    pub fn is_failure(&self) -> bool {
        matches!(
            self.status,
            CheckStatus::Failed | CheckStatus::PreconditionViolated
        )
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: max_violation={:.3e} tol={:.1e} samples={}",
            self.status.name(),
            self.name,
            self.max_violation,
            self.tolerance,
            self.samples_checked
        )?;
        if let Some(i) = self.failing_index {
            write!(f, " first_failure_at={i}")?;
        }
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

/// `‖w − x‖² = (1+α)‖x_k − x‖² − α‖x_{k−1} − x‖² + α(1+α)‖x_k − x_{k−1}‖²`
/// for `w = x_k + α(x_k − x_{k−1})`, checked to `1e-10` relative.
pub fn check_extrapolation_identity(
    x_k: &[f64],
    x_km1: &[f64],
    x_ref: &[f64],
    alpha_k: f64,
) -> Result<CheckReport> {
    check_dim("extrapolation identity", x_k.len(), x_km1.len())?;
    check_dim("extrapolation identity", x_k.len(), x_ref.len())?;
    let w = extrapolate(x_k, x_km1, alpha_k)?;
    let lhs = vector::dist_sq(&w, x_ref);
    let a = (1.0 + alpha_k) * vector::dist_sq(x_k, x_ref);
    let b = alpha_k * vector::dist_sq(x_km1, x_ref);
    let c = alpha_k * (1.0 + alpha_k) * vector::dist_sq(x_k, x_km1);
    let rhs = a - b + c;
    let scale = (lhs + a + b + c).max(f64::MIN_POSITIVE);
    Ok(CheckReport::from_violation(
        "extrapolation_identity",
        (lhs - rhs).abs() / scale,
        1e-10,
        1,
        Some(0),
    ))
}

/// Tolerance on the step-system residual below which a failed step
/// identity counts as a genuine failure.
const TIGHT_SOLVE: f64 = 1e-10;

fn step_identity(
    op: &dyn LinearOperator,
    x_next: &[f64],
    w_k: &[f64],
    x_star: &[f64],
    data: &[f64],
    lambda_k: f64,
    sign: f64,
) -> Result<CheckReport> {
    let name = "step_identity";
    check_dim("step identity x_next", op.domain_dim(), x_next.len())?;
    check_dim("step identity w_k", op.domain_dim(), w_k.len())?;
    check_dim("step identity x_star", op.domain_dim(), x_star.len())?;
    check_dim("step identity data", op.range_dim(), data.len())?;

    let consistency = vector::dist(&op.apply(x_star)?, data);
    let data_norm = vector::norm(data);
    if consistency > 1e-12 * data_norm.max(1.0) {
        return Ok(
            CheckReport::from_violation(name, 0.0, 1e-8, 0, None).with_status(
                CheckStatus::Skipped,
                format!("data inconsistent with x_star (‖A x⋆ − y‖ = {consistency:.2e})"),
            ),
        );
    }

    let mut r = op.apply(x_next)?;
    vector::axpy(-1.0, data, &mut r);
    let g = op.apply_adjoint(&r)?;
    let lhs_a = vector::dist_sq(w_k, x_star);
    let lhs_b = vector::dist_sq(x_next, x_star);
    let lhs = lhs_a - lhs_b;
    let rhs_a = lambda_k * lambda_k * vector::norm_sq(&g);
    let rhs_b = 2.0 * lambda_k * vector::norm_sq(&r);
    let rhs = rhs_a + sign * rhs_b;
    let scale = (lhs_a + lhs_b + rhs_a + rhs_b).max(f64::MIN_POSITIVE);
    let report = CheckReport::from_violation(name, (lhs - rhs).abs() / scale, 1e-8, 1, Some(0));
    if report.passed {
        return Ok(report);
    }

    let mut step_rhs = op.apply_adjoint(data)?;
    for (s, w) in step_rhs.iter_mut().zip(w_k) {
        *s = lambda_k * *s + w;
    }
    let solve_res = system_residual(op, lambda_k, x_next, &step_rhs)?;
    if solve_res > TIGHT_SOLVE * vector::norm(&step_rhs).max(1.0) {
        return Ok(report.with_status(
            CheckStatus::Inconclusive,
            format!("step system solved loosely (residual {solve_res:.2e})"),
        ));
    }
    Ok(report)
}

/// `‖w_k − x⋆‖² − ‖x_{k+1} − x⋆‖² = λ²‖A*(A x_{k+1} − y)‖² + 2λ‖A x_{k+1} − y‖²`
/// for exact data `y = A x⋆`, to `1e-8` relative.
pub fn check_step_identity(
    op: &dyn LinearOperator,
    x_next: &[f64],
    w_k: &[f64],
    x_star: &[f64],
    data: &[f64],
    lambda_k: f64,
) -> Result<CheckReport> {
    step_identity(op, x_next, w_k, x_star, data, lambda_k, 1.0)
}

/// `‖A x_{k+1} − y^δ‖ ≤ ‖A w_k − y^δ‖ + 1e-8 ‖y^δ‖` at every step. Residuals
/// are recomputed from stored iterates when the trace carries them.
pub fn check_residual_monotonicity(
    trace: &IterationTrace,
    op: &dyn LinearOperator,
    noisy_data: &[f64],
) -> Result<CheckReport> {
    check_dim(
        "residual monotonicity data",
        op.range_dim(),
        noisy_data.len(),
    )?;
    let y_norm = vector::norm(noisy_data).max(f64::MIN_POSITIVE);
    let resid = |x: &[f64]| -> Result<f64> {
        let mut r = op.apply(x)?;
        vector::axpy(-1.0, noisy_data, &mut r);
        Ok(vector::norm(&r))
    };
    let pairs: Vec<(f64, f64)> = match (&trace.iterates, &trace.extrapolants) {
        (Some(xs), Some(ws)) => ws
            .iter()
            .zip(xs.iter().skip(1))
            .map(|(w, x)| Ok((resid(x)?, resid(w)?)))
            .collect::<Result<_>>()?,
        _ => trace
            .records
            .iter()
            .skip(1)
            .filter_map(|r| Some((r.residual_norm, r.extrapolant_residual?)))
            .collect(),
    };
    let mut worst = f64::NEG_INFINITY;
    let mut failing = None;
    for (k, (rx, rw)) in pairs.iter().enumerate() {
        let v = (rx - rw) / y_norm;
        if v > 1e-8 && failing.is_none() {
            failing = Some(k);
        }
        worst = worst.max(v);
    }
    Ok(CheckReport::from_violation(
        "residual_monotonicity",
        worst.max(0.0),
        1e-8,
        pairs.len(),
        failing,
    ))
}

/// `‖x_{k+1} − x⋆‖ ≤ ‖w_k − x⋆‖ + 1e-8` on every step whose new residual is
/// still at least `δ`.
pub fn check_error_vs_extrapolant(trace: &IterationTrace) -> CheckReport {
    let mut worst: f64 = 0.0;
    let mut failing = None;
    let mut n = 0;
    for (k, r) in trace.records.iter().enumerate().skip(1) {
        let (Some(ex), Some(ew)) = (r.error_norm, r.extrapolant_error) else {
            continue;
        };
        if r.residual_norm < trace.delta {
            continue;
        }
        n += 1;
        let v = ex - ew;
        if v > 1e-8 && failing.is_none() {
            failing = Some(k - 1);
        }
        worst = worst.max(v);
    }
    CheckReport::from_violation("error_vs_extrapolant", worst, 1e-8, n, failing)
}

/// Upper bound on the discrepancy stopping index for `λ_k ≥ λ > 0`:
/// `(2λτδ²(τ−1))⁻¹ (‖x_0 − x⋆‖² + M Σα_k + 2Σθ_k)`.
pub fn kstar_bound(
    lambda_floor: f64,
    tau: f64,
    delta: f64,
    x0_err_sq: f64,
    m_delta: f64,
    sum_alpha: f64,
    sum_theta: f64,
) -> f64 {
    (x0_err_sq + m_delta * sum_alpha + 2.0 * sum_theta)
        / (2.0 * lambda_floor * tau * delta * delta * (tau - 1.0))
}

#[allow(clippy::too_many_arguments)]
pub fn check_kstar_bound(
    trace: &IterationTrace,
    lambda_floor: f64,
    tau: f64,
    delta: f64,
    x0_err_sq: f64,
    m_delta: f64,
    sum_alpha: f64,
    sum_theta: f64,
) -> CheckReport {
    let name = "kstar_bound";
    if !trace.lambda_sum_divergent {
        return CheckReport::from_violation(name, 0.0, 0.0, 0, None)
            .with_status(CheckStatus::Skipped, "lambda schedule has a finite sum");
    }
    if !(delta > 0.0 && lambda_floor > 0.0) {
        return CheckReport::from_violation(name, 0.0, 0.0, 0, None).with_status(
            CheckStatus::Skipped,
            "needs delta > 0 and a positive lambda floor",
        );
    }
    let bound = kstar_bound(
        lambda_floor,
        tau,
        delta,
        x0_err_sq,
        m_delta,
        sum_alpha,
        sum_theta,
    );
    let k = trace.stop_index as f64;
    let report =
        CheckReport::from_violation(name, (k - bound).max(0.0), 0.0, 1, Some(trace.stop_index))
            .with_detail(format!("k*={} bound={bound:.4e}", trace.stop_index));
    if trace.stop_reason != StopReason::Discrepancy && report.passed {
        return report.with_status(
            CheckStatus::Inconclusive,
            format!(
                "discrepancy not reached after {} steps, bound {bound:.4e}",
                trace.stop_index
            ),
        );
    }
    report
}

/// [`check_kstar_bound`] with every input read off the trace.
pub fn check_kstar_bound_from_trace(trace: &IterationTrace) -> CheckReport {
    let x0_err_sq = trace
        .records
        .first()
        .and_then(|r| r.error_norm)
        .map_or(0.0, |e| e * e);
    check_kstar_bound(
        trace,
        trace.lambda_floor,
        trace.tau,
        trace.delta,
        x0_err_sq,
        trace.max_error_sq,
        trace.sum_alpha,
        trace.sum_theta,
    )
}

/// Partial sums of the four series that stay bounded along the iteration:
/// `λ_k‖Ax_{k+1} − y‖²`, `‖λ_k A*(Ax_{k+1} − y)‖²`, `‖x_{k+1} − w_k‖²`,
/// `‖x_{k+1} − x_k‖²`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SeriesSums {
    pub weighted_residual: Vec<f64>,
    pub scaled_gradient: Vec<f64>,
    pub correction: Vec<f64>,
    pub step: Vec<f64>,
}

pub fn series_accumulators(trace: &IterationTrace) -> SeriesSums {
    let mut s = SeriesSums::default();
    let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
    for r in trace.records.iter().skip(1) {
        a += r.lambda * r.residual_norm * r.residual_norm;
        b += (r.lambda * r.gradient_norm).powi(2);
        c += r.correction_norm * r.correction_norm;
        d += r.step_norm * r.step_norm;
        s.weighted_residual.push(a);
        s.scaled_gradient.push(b);
        s.correction.push(c);
        s.step.push(d);
    }
    s
}

/// Growth over the last quarter of the partial sums, relative to the total.
pub fn last_quarter_growth(partial: &[f64]) -> f64 {
    let Some(&total) = partial.last() else {
        return 0.0;
    };
    if total == 0.0 {
        return 0.0;
    }
    let start = partial.len() - partial.len().div_ceil(4);
    let before = if start == 0 { 0.0 } else { partial[start - 1] };
    (total - before) / total
}

/// Partial sums are non-decreasing and grow by at most 5% over the last
/// quarter of the run.
pub fn check_series_plateau(trace: &IterationTrace) -> CheckReport {
    let s = series_accumulators(trace);
    let mut worst: f64 = 0.0;
    let mut failing = None;
    for (i, series) in [
        &s.weighted_residual,
        &s.scaled_gradient,
        &s.correction,
        &s.step,
    ]
    .into_iter()
    .enumerate()
    {
        let decreasing = series.windows(2).any(|w| w[1] < w[0]);
        let g = if decreasing {
            f64::INFINITY
        } else {
            last_quarter_growth(series)
        };
        if g > 0.05 && failing.is_none() {
            failing = Some(i);
        }
        worst = worst.max(g);
    }
    CheckReport::from_violation("series_plateau", worst, 0.05, 4, failing)
        .with_detail(format!("{} steps", s.step.len()))
}

/// `Σ α_k ‖x_k − x_{k−1}‖² ≤ Σ θ_k`.
pub fn check_inertial_summability(trace: &IterationTrace) -> CheckReport {
    let excess = trace.sum_eta - trace.sum_theta;
    let tol = 1e-12 * trace.sum_theta.max(1.0);
    CheckReport::from_violation(
        "inertial_summability",
        excess.max(0.0),
        tol,
        1,
        Some(trace.stop_index),
    )
    .with_detail(format!(
        "sum_eta={:.4e} sum_theta={:.4e}",
        trace.sum_eta, trace.sum_theta
    ))
}

/// Quantities tracked while checking the sequence lemma.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SequenceLemmaReport {
    /// `γ_k = φ_k − φ_{k−1}`, `k ≥ 0`.
    pub gamma: Vec<f64>,
    /// `ζ_k = φ_k − Σ_{j=1}^k [γ_j]_+`, `k ≥ 1`.
    pub zeta: Vec<f64>,
    /// Last `φ_k`, the empirical limit.
    pub limit_estimate: f64,
    pub hypothesis_violation: Option<usize>,
}

/// Checks the sequence lemma behind boundedness of the iterates.
///
/// `phis[0]` is `φ_{−1}`, `phis[k+1]` is `φ_k`; `alphas[k]` and `etas[k]`
/// are `α_k`, `η_k`. Verifies the hypothesis
/// `φ_{k+1} − φ_k ≤ α_k(φ_k − φ_{k−1}) + 2η_k`, then that `ζ_k` is
/// non-increasing and `[γ_{k+1}]_+ ≤ α[γ_k]_+ + 2η_k`.
pub fn check_sequence_lemma(
    alphas: &[f64],
    phis: &[f64],
    etas: &[f64],
    alpha_cap: f64,
) -> Result<(CheckReport, SequenceLemmaReport)> {
    if !(alpha_cap > 0.0 && alpha_cap < 1.0) {
        return Err(invalid(
            "alpha_cap",
            format!("must lie in (0, 1), got {alpha_cap}"),
        ));
    }
    if phis.len() < 2 {
        return Err(invalid("phis", "need at least phi_{-1} and phi_0"));
    }
    let steps = phis.len() - 2;
    if alphas.len() < steps || etas.len() < steps {
        return Err(invalid("alphas/etas", format!("need {steps} entries")));
    }
    if phis.iter().chain(etas).any(|v| !(*v >= 0.0)) {
        return Err(invalid("phis/etas", "must be nonnegative"));
    }
    if alphas[..steps]
        .iter()
        .any(|a| !(0.0..=alpha_cap).contains(a))
    {
        return Err(invalid("alphas", "must lie in [0, alpha_cap]"));
    }

    let scale = phis
        .iter()
        .copied()
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let tol = 1e-10 * scale;
    let phi = |k: isize| phis[(k + 1) as usize];

    let mut lemma = SequenceLemmaReport {
        limit_estimate: *phis.last().expect("non-empty"),
        ..Default::default()
    };
    let mut worst: f64 = 0.0;
    let mut failing = None;
    for k in 0..steps {
        let ki = k as isize;
        let lhs = phi(ki + 1) - phi(ki);
        let rhs = alphas[k] * (phi(ki) - phi(ki - 1)) + 2.0 * etas[k];
        if lhs - rhs > tol && lemma.hypothesis_violation.is_none() {
            lemma.hypothesis_violation = Some(k);
        }
    }

    lemma.gamma = (0..=steps as isize).map(|k| phi(k) - phi(k - 1)).collect();
    let pos = |g: f64| g.max(0.0);
    let mut acc = 0.0;
    for k in 1..=steps {
        acc += pos(lemma.gamma[k]);
        lemma.zeta.push(phi(k as isize) - acc);
    }
    for (i, w) in lemma.zeta.windows(2).enumerate() {
        let v = w[1] - w[0];
        if v > tol && failing.is_none() {
            failing = Some(i + 1);
        }
        worst = worst.max(v.max(0.0) / scale);
    }
    for (k, eta) in etas.iter().take(steps).enumerate() {
        let v = pos(lemma.gamma[k + 1]) - alpha_cap * pos(lemma.gamma[k]) - 2.0 * eta;
        if v > tol && failing.is_none() {
            failing = Some(k);
        }
        worst = worst.max(v.max(0.0) / scale);
    }

    let report = CheckReport::from_violation("sequence_lemma", worst, 1e-10, steps, failing)
        .with_detail(format!("limit_estimate={:.6e}", lemma.limit_estimate));
    let report = match lemma.hypothesis_violation {
        Some(k) => {
            let mut r = report.with_status(
                CheckStatus::PreconditionViolated,
                format!("hypothesis violated at k={k}"),
            );
            r.failing_index = Some(k);
            r
        }
        None => report,
    };
    Ok((report, lemma))
}

/// `(α_k, φ_k, η_k)` from an implicit-method trace with
/// `φ_k = ‖x_k − x⋆‖²` and `η_k = α_k‖x_k − x_{k−1}‖²`.
pub fn sequence_lemma_inputs(trace: &IterationTrace) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let recs = &trace.records;
    let mut phis = Vec::with_capacity(recs.len() + 1);
    if let Some(first) = recs.first() {
        let e0 = first.error_norm.unwrap_or(0.0);
        phis.push(e0 * e0);
    }
    phis.extend(recs.iter().map(|r| r.error_norm.unwrap_or(0.0).powi(2)));
    let alphas: Vec<f64> = recs.iter().skip(1).map(|r| r.alpha).collect();
    let etas: Vec<f64> = recs
        .iter()
        .zip(recs.iter().skip(1))
        .map(|(cur, next)| next.alpha * cur.step_norm * cur.step_norm)
        .collect();
    (alphas, phis, etas)
}

/// Each value at most `(1 + slack)` times its predecessor.
pub fn check_nonincreasing_trend(name: &str, values: &[f64], slack: f64) -> CheckReport {
    let mut worst: f64 = 0.0;
    let mut failing = None;
    for (i, w) in values.windows(2).enumerate() {
        let excess = if w[0] > 0.0 {
            w[1] / w[0] - 1.0
        } else if w[1] > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if excess > slack && failing.is_none() {
            failing = Some(i + 1);
        }
        worst = worst.max(excess);
    }
    CheckReport::from_violation(name, worst.max(0.0), slack, values.len(), failing).with_detail(
        format!(
            "values=[{}]",
            values
                .iter()
                .map(|v| format!("{v:.4e}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

/// `x_0`-minimal-norm solution `x† = x_0 + A⁺(y − A x_0)` via a dense SVD.
pub fn minimum_norm_solution(op: &DenseOperator, data: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
    check_dim("minimum norm data", op.range_dim(), data.len())?;
    check_dim("minimum norm x0", op.domain_dim(), x0.len())?;
    let a = DMatrix::from_row_slice(op.range_dim(), op.domain_dim(), op.entries());
    let mut r = op.apply(x0)?;
    for (ri, yi) in r.iter_mut().zip(data) {
        *ri = yi - *ri;
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * 1e-13 * op.range_dim().max(op.domain_dim()) as f64;
    let sol = svd
        .solve(&DVector::from_vec(r), eps)
        .map_err(|e| invalid("operator", e.to_string()))?;
    Ok(x0.iter().zip(sol.iter()).map(|(a, b)| a + b).collect())
}

/// `‖x_k^{δ_j} − x_k‖` for `δ_j = δ_0 · 2^{−j}`, `j = 0..levels`, with
/// stopping disabled so that exactly `k` steps are taken.
pub fn stability_study(
    config: &SolverConfig,
    base_level: f64,
    levels: usize,
    k: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let cfg = SolverConfig {
        max_outer: k,
        exact_data_tol: 0.0,
        ..config.clone()
    };
    let exact = dense_test_problem(0.0, seed)?;
    let reference = run_init(&exact, &cfg)?;
    (0..levels)
        .map(|j| {
            let mut p = dense_test_problem(base_level * 0.5f64.powi(j as i32), seed)?;
            p.delta = 0.0;
            let t = run_init(&p, &cfg)?;
            Ok(vector::dist(&t.final_iterate, &reference.final_iterate))
        })
        .collect()
}

/// Error `‖x_{k*}^δ − x†‖` at the discrepancy index for each noise level.
pub fn semiconvergence_study(config: &SolverConfig, levels: &[f64], seed: u64) -> Result<Vec<f64>> {
    let exact = dense_test_problem(0.0, seed)?;
    let dense = DenseOperator::from_columns(
        exact.operator.range_dim(),
        &(0..exact.operator.domain_dim())
            .map(|j| {
                let mut e = vec![0.0; exact.operator.domain_dim()];
                e[j] = 1.0;
                exact.operator.apply(&e)
            })
            .collect::<Result<Vec<_>>>()?,
    )?;
    let x0 = vec![config.initial_value; dense.domain_dim()];
    let x_dag = minimum_norm_solution(&dense, &exact.exact_data, &x0)?;
    levels
        .iter()
        .map(|&level| {
            let p = dense_test_problem(level, seed)?;
            let t = run_init_from(&p, config, x0.clone())?;
            Ok(vector::dist(&t.final_iterate, &x_dag))
        })
        .collect()
}

/// Configuration shared by the built-in checks: constant `λ_k = 1`, tight
/// inner solves.
pub fn selftest_config(method: Method) -> SolverConfig {
    SolverConfig {
        method,
        tau: 1.5,
        alpha_bar: 0.45,
        lambda_schedule: LambdaSchedule::Constant(1.0),
        inner_tol: 1e-13,
        max_outer: 400,
        ..SolverConfig::default()
    }
}

fn random_dense(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Result<DenseOperator> {
    let entries = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    DenseOperator::new(rows, cols, entries)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `instances` random extrapolation-identity checks in dimension ≤ 10.
pub fn extrapolation_identity_suite(instances: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reports = (0..instances)
        .map(|_| {
            let n = rng.random_range(1..=10);
            let xk = random_vec(&mut rng, n);
            let xkm1 = random_vec(&mut rng, n);
            let xr = random_vec(&mut rng, n);
            let a = rng.random_range(0.0..0.9);
            check_extrapolation_identity(&xk, &xkm1, &xr, a)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CheckReport::merge("extrapolation_identity", reports))
}

/// `instances` random step-identity checks on dense problems of
/// dimension ≤ 10 with a tightly solved step.
pub fn step_identity_suite(
    instances: usize,
    seed: u64,
    inject_sign_error: bool,
) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sign = if inject_sign_error { -1.0 } else { 1.0 };
    let reports = (0..instances)
        .map(|_| {
            let rows = rng.random_range(1..=10);
            let cols = rng.random_range(1..=10);
            let a = random_dense(&mut rng, rows, cols)?;
            let x_star = random_vec(&mut rng, cols);
            let y = a.apply(&x_star)?;
            let w = random_vec(&mut rng, cols);
            let lambda = rng.random_range(0.05..3.0);
            let solve = StepSolve {
                tol: 1e-14,
                max_iter: Some(10 * cols),
                ..StepSolve::default()
            };
            let x_next = tikhonov_step(&a, &w, lambda, &y, solve)?.x_next;
            step_identity(&a, &x_next, &w, &x_star, &y, lambda, sign)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CheckReport::merge("step_identity", reports))
}

/// Largest per-iterate gap between an iniT run with `ᾱ = 0` and iT.
pub fn check_reduction(problem: &Problem, config: &SolverConfig) -> Result<CheckReport> {
    let base = SolverConfig {
        record_iterates: true,
        ..config.clone()
    };
    let init = run_init(
        problem,
        &SolverConfig {
            method: Method::Init,
            alpha_bar: 0.0,
            ..base.clone()
        },
    )?;
    let it = run_init(
        problem,
        &SolverConfig {
            method: Method::It,
            ..base
        },
    )?;
    let xa = init.iterates.unwrap_or_default();
    let xb = it.iterates.unwrap_or_default();
    let mut worst: f64 = 0.0;
    let mut failing = None;
    for (k, (a, b)) in xa.iter().zip(&xb).enumerate() {
        let d = vector::dist(a, b) / vector::norm(b).max(1.0);
        if d > 1e-10 && failing.is_none() {
            failing = Some(k);
        }
        worst = worst.max(d);
    }
    if xa.len() != xb.len() {
        worst = f64::INFINITY;
        failing = failing.or(Some(xa.len().min(xb.len())));
    }
    Ok(CheckReport::from_violation(
        "reduction_to_it",
        worst,
        1e-10,
        xa.len(),
        failing,
    ))
}

/// Adjoint consistency `|⟨Ax, y⟩ − ⟨x, A*y⟩| ≤ 1e-10 (1 + ‖x‖‖y‖)` on
/// seeded random pairs.
pub fn check_adjoint(op: &dyn LinearOperator, pairs: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut failing = None;
    for i in 0..pairs {
        let x = random_vec(&mut rng, op.domain_dim());
        let y = random_vec(&mut rng, op.range_dim());
        let lhs = vector::dot(&op.apply(&x)?, &y);
        let rhs = vector::dot(&x, &op.apply_adjoint(&y)?);
        let v = (lhs - rhs).abs() / (1.0 + vector::norm(&x) * vector::norm(&y));
        if v > 1e-10 && failing.is_none() {
            failing = Some(i);
        }
        worst = worst.max(v);
    }
    Ok(CheckReport::from_violation(
        "adjoint_consistency",
        worst,
        1e-10,
        pairs,
        failing,
    ))
}

/// Full built-in suite on small problems. With `inject_sign_error` the
/// step identity is evaluated with a flipped sign to exercise failure
/// reporting.
pub fn run_selftest_suite(inject_sign_error: bool) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    let dense = dense_test_problem(0.0, 1)?;
    out.push(check_adjoint(dense.operator.as_ref(), 20, 3)?);
    out.push(extrapolation_identity_suite(100, 11)?);
    out.push(step_identity_suite(100, 12, inject_sign_error)?);

    let mut red_cfg = selftest_config(Method::Init);
    red_cfg.max_outer = 30;
    out.push(check_reduction(&dense, &red_cfg)?);

    let noisy = dense_test_problem(0.05, 7)?;
    let cfg = SolverConfig {
        record_iterates: true,
        ..selftest_config(Method::Init)
    };
    let trace = run_init(&noisy, &cfg)?;
    out.push(check_residual_monotonicity(
        &trace,
        noisy.operator.as_ref(),
        &noisy.noisy_data,
    )?);
    out.push(check_error_vs_extrapolant(&trace));
    out.push(check_kstar_bound_from_trace(&trace));
    out.push(check_inertial_summability(&trace));
    let (alphas, phis, etas) = sequence_lemma_inputs(&trace);
    out.push(check_sequence_lemma(&alphas, &phis, &etas, cfg.alpha_bar.max(1e-3))?.0);

    let well_posed = Problem::exact(
        std::sync::Arc::new(DenseOperator::from_rows(&[vec![2.0, 0.5], vec![0.3, 1.5]])?),
        vec![1.0, -1.0],
    )?;
    let plateau_cfg = SolverConfig {
        max_outer: 60,
        exact_data_tol: 0.0,
        ..selftest_config(Method::Init)
    };
    out.push(check_series_plateau(&run_init(&well_posed, &plateau_cfg)?));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::DiagonalOperator;
    use std::sync::Arc;

    #[test]
    fn extrapolation_identity_trivial_cases() {
        let xk = [1.0, 2.0, -1.0];
        let xr = [0.5, 0.0, 1.0];
        let r = check_extrapolation_identity(&xk, &[3.0, 3.0, 3.0], &xr, 0.0).unwrap();
        assert!(r.passed && r.max_violation <= 1e-15);
        let r = check_extrapolation_identity(&xk, &xk, &xr, 0.7).unwrap();
        assert!(r.passed);
        assert!(check_extrapolation_identity(&xk, &[1.0], &xr, 0.7).is_err());
    }

    #[test]
    fn step_identity_scalar() {
        // A = 1, λ = 1, w = 0, y = 1, x⋆ = 1: x₁ = 1/2, both sides 3/4
        let a = DenseOperator::from_rows(&[vec![1.0]]).unwrap();
        let r = check_step_identity(&a, &[0.5], &[0.0], &[1.0], &[1.0], 1.0).unwrap();
        assert!(r.passed, "{r}");
        assert!(r.max_violation < 1e-15);
    }

    #[test]
    fn step_identity_at_solution() {
        let a = DenseOperator::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let xs = [1.0, 1.0];
        let y = a.apply(&xs).unwrap();
        let r = check_step_identity(&a, &xs, &xs, &xs, &y, 0.3).unwrap();
        assert!(r.passed);
    }

    #[test]
    fn loose_step_is_inconclusive_not_failed() {
        let a = DenseOperator::from_rows(&[vec![1.0]]).unwrap();
        let r = check_step_identity(&a, &[0.4], &[0.0], &[1.0], &[1.0], 1.0).unwrap();
        assert_eq!(r.status, CheckStatus::Inconclusive);
        assert!(!r.is_failure());
    }

    #[test]
    fn injected_sign_error_fails_with_index() {
        let r = step_identity_suite(5, 1, true).unwrap();
        assert_eq!(r.status, CheckStatus::Failed);
        assert_eq!(r.failing_index, Some(0));
        assert!(step_identity_suite(20, 1, false).unwrap().passed);
    }

    #[test]
    fn sequence_lemma_trivial_sequences() {
        let (r, l) = check_sequence_lemma(&[0.0; 5], &[2.0; 7], &[0.0; 5], 0.5).unwrap();
        assert!(r.passed, "{r}");
        assert!(l.zeta.iter().all(|&z| z == 2.0));
        assert_eq!(l.limit_estimate, 2.0);

        let phis: Vec<f64> = (-1..30).map(|k| 0.5f64.powi(k.max(0))).collect();
        let (r, l) = check_sequence_lemma(&[0.0; 30], &phis, &[0.0; 30], 0.5).unwrap();
        assert!(r.passed, "{r}");
        assert!(l.zeta.windows(2).all(|w| w[1] <= w[0]));
        assert!(l.limit_estimate < 1e-8);
    }

    #[test]
    fn sequence_lemma_reports_hypothesis_violation() {
        let phis = [1.0, 1.0, 1.0, 2.0];
        let (r, l) = check_sequence_lemma(&[0.1, 0.1], &phis, &[0.0, 0.0], 0.5).unwrap();
        assert_eq!(r.status, CheckStatus::PreconditionViolated);
        assert_eq!(l.hypothesis_violation, Some(1));
        assert_eq!(r.failing_index, Some(1));
    }

    #[test]
    fn series_zero_for_stationary_run() {
        let p = Problem::exact(
            Arc::new(DiagonalOperator::identity(2).unwrap()),
            vec![0.0, 0.0],
        )
        .unwrap();
        let t = run_init(
            &p,
            &SolverConfig {
                max_outer: 5,
                exact_data_tol: 0.0,
                ..selftest_config(Method::Init)
            },
        )
        .unwrap();
        let s = series_accumulators(&t);
        assert!(s
            .step
            .iter()
            .chain(&s.correction)
            .chain(&s.weighted_residual)
            .all(|&v| v == 0.0));
    }

    #[test]
    fn kstar_bound_is_decreasing_in_delta() {
        let mut last = f64::INFINITY;
        for d in [0.01, 0.02, 0.05, 0.1, 0.5] {
            let b = kstar_bound(1.0, 1.5, d, 2.0, 3.0, 0.6, 1.2);
            assert!(b < last);
            last = b;
        }
    }

    #[test]
    fn kstar_skipped_for_summable_schedule() {
        let p = dense_test_problem(0.05, 2).unwrap();
        let cfg = SolverConfig {
            lambda_schedule: LambdaSchedule::Geometric(2.0 / 3.0),
            max_outer: 10,
            ..selftest_config(Method::Init)
        };
        let t = run_init(&p, &cfg).unwrap();
        assert_eq!(
            check_kstar_bound_from_trace(&t).status,
            CheckStatus::Skipped
        );
    }

    #[test]
    fn trend_check() {
        assert!(check_nonincreasing_trend("t", &[4.0, 2.0, 2.1, 1.0], 0.1).passed);
        let r = check_nonincreasing_trend("t", &[4.0, 2.0, 3.0], 0.1);
        assert_eq!(r.failing_index, Some(2));
    }

    #[test]
    fn report_lines() {
        let r = CheckReport::from_violation("x", 0.5, 1.0, 3, None);
        assert!(r.to_string().starts_with("[PASS] x"));
        let v: serde_json::Value = serde_json::from_str(&r.to_json_line()).unwrap();
        assert_eq!(v["status"], "passed");
        assert_eq!(v["samples_checked"], 3);
    }

    #[test]
    fn selftest_suite_passes() {
        for r in run_selftest_suite(false).unwrap() {
            assert!(r.passed, "{r}");
        }
    }
}
