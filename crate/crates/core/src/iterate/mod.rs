//! Outer iteration engine.
//!
//! The implicit methods share one loop: iterated Tikhonov (iT) is the
//! inertial method (iniT) with every inertial weight fixed at zero. The
//! explicit two-point baselines (Nesterov, FISTA) live in [`explicit`].

mod explicit;
mod schedule;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use explicit::{run_fista, run_nesterov};
pub use schedule::{inertial_weight, nesterov_momentum, theta, FistaSequence, LambdaSchedule};

use crate::error::{check_dim, invalid, Error, Result};
use crate::inner_solve::{cg_solve, default_max_iter, spectral_solve};
use crate::linop::LinearOperator;
use crate::problems::Problem;
use crate::vector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Init,
    It,
    Nesterov,
    Fista,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Init => "init",
            Self::It => "it",
            Self::Nesterov => "nesterov",
            Self::Fista => "fista",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "init" | "init_tikhonov" | "inertial" => Some(Self::Init),
            "it" | "iterated_tikhonov" => Some(Self::It),
            "nesterov" => Some(Self::Nesterov),
            "fista" => Some(Self::Fista),
            _ => None,
        }
    }

    pub fn is_implicit(self) -> bool {
        matches!(self, Self::Init | Self::It)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How iniT picks `α_k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum InertiaRule {
    /// `min{θ_k/‖x_k − x_{k−1}‖², θ_k, ᾱ}` with `α_0 = ᾱ`.
    Adaptive,
    /// `α_k ≡ ᾱ`. Outside the convergence theory, kept for experiments.
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InnerSolver {
    /// Spectral solve for convolutions, CG otherwise.
    Auto,
    Cg,
    Spectral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    /// Discrepancy constant, `τ > 1`.
    pub tau: f64,
    /// Upper bound `ᾱ ∈ [0, 1)` for the inertial weights.
    pub alpha_bar: f64,
    pub inertia: InertiaRule,
    pub lambda_schedule: LambdaSchedule,
    /// `p` in `θ_k = (1/k)^p`.
    pub theta_exponent: f64,
    pub inner_solver: InnerSolver,
    pub inner_tol: f64,
    /// `None` uses the domain dimension.
    pub inner_max_iter: Option<usize>,
    /// Start CG from `x_k` (solving for the step) instead of from zero.
    pub warm_start: bool,
    pub max_outer: usize,
    /// Exact-data stop: residual ≤ `exact_data_tol · ‖y‖`.
    pub exact_data_tol: f64,
    /// `α ≥ 3` in the Nesterov momentum `(k−1)/(k−1+α)`.
    pub nesterov_alpha: f64,
    /// Power-iteration sweeps for the explicit step size `γ = 1/‖A‖`.
    pub norm_iters: usize,
    /// Constant initial guess `x_0`.
    pub initial_value: f64,
    pub seed: u64,
    /// Keep every `x_k` and `w_k` in the trace.
    pub record_iterates: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Init,
            tau: 1.5,
            alpha_bar: 0.45,
            inertia: InertiaRule::Adaptive,
            lambda_schedule: LambdaSchedule::Geometric(1.5),
            theta_exponent: 1.1,
            inner_solver: InnerSolver::Auto,
            inner_tol: 1e-6,
            inner_max_iter: None,
            warm_start: true,
            max_outer: 200,
            exact_data_tol: 1e-12,
            nesterov_alpha: 3.0,
            norm_iters: 100,
            initial_value: 0.0,
            seed: 0,
            record_iterates: false,
        }
    }
}

impl SolverConfig {
    pub fn with_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 1.0) {
            return Err(invalid(
                "tau",
                format!("must satisfy tau > 1, got {}", self.tau),
            ));
        }
        if !(0.0..1.0).contains(&self.alpha_bar) {
            return Err(invalid(
                "alpha_bar",
                format!("must lie in [0, 1), got {}", self.alpha_bar),
            ));
        }
        if !(self.theta_exponent > 1.0) {
            return Err(invalid(
                "theta_exponent",
                format!(
                    "must exceed 1 so that sum(theta_k) converges, got {}",
                    self.theta_exponent
                ),
            ));
        }
        if !(self.inner_tol > 0.0) {
            return Err(invalid("inner_tol", "must be positive"));
        }
        if !(self.exact_data_tol >= 0.0) {
            return Err(invalid("exact_data_tol", "must be nonnegative"));
        }
        if !(self.nesterov_alpha >= 3.0) {
            return Err(invalid(
                "nesterov_alpha",
                format!("must satisfy alpha >= 3, got {}", self.nesterov_alpha),
            ));
        }
        if self.norm_iters == 0 {
            return Err(invalid("norm_iters", "must be at least 1"));
        }
        if !self.initial_value.is_finite() {
            return Err(invalid("initial_value", "must be finite"));
        }
        self.lambda_schedule.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Discrepancy,
    ExactTol,
    MaxOuter,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            Self::Discrepancy => "discrepancy",
            Self::ExactTol => "exact_tol",
            Self::MaxOuter => "max_outer",
        }
    }
}

/// Everything known about iterate `x_k`. The step fields (`alpha`, `lambda`,
/// `inner_iterations` and the `*_prev`/extrapolant quantities) describe the
/// update that produced `x_k`, so they are zero/`None` at `k = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    /// `‖A x_k − y^δ‖`
    pub residual_norm: f64,
    /// `‖x_k − x⋆‖`
    pub error_norm: Option<f64>,
    pub alpha: f64,
    pub lambda: f64,
    pub inner_iterations: usize,
    /// `‖A w_{k−1} − y^δ‖`
    pub extrapolant_residual: Option<f64>,
    /// `‖w_{k−1} − x⋆‖`
    pub extrapolant_error: Option<f64>,
    /// `‖x_k − x_{k−1}‖`
    pub step_norm: f64,
    /// `‖x_k − w_{k−1}‖`
    pub correction_norm: f64,
    /// `‖A*(A x_k − y^δ)‖`
    pub gradient_norm: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationTrace {
    pub method: Method,
    pub records: Vec<StepRecord>,
    pub stop_index: usize,
    pub stop_reason: StopReason,
    pub tau: f64,
    pub delta: f64,
    /// `‖y^δ‖`
    pub data_norm: f64,
    /// `‖x⋆‖`
    pub truth_norm: f64,
    /// `Σ_k α_k` over the executed steps.
    pub sum_alpha: f64,
    /// `Σ_{k≥1} θ_k` over the executed steps.
    pub sum_theta: f64,
    /// `Σ_k α_k ‖x_k − x_{k−1}‖²`
    pub sum_eta: f64,
    /// `max_k ‖x_k − x⋆‖²`
    pub max_error_sq: f64,
    /// Smallest `λ_k` used.
    pub lambda_floor: f64,
    pub lambda_sum_divergent: bool,
    /// Whether `α_k` was non-increasing over the run.
    pub alpha_monotone: bool,
    pub total_inner_iterations: usize,
    pub final_iterate: Vec<f64>,
    /// `x_0, …, x_{k*}` when recording was requested.
    pub iterates: Option<Vec<Vec<f64>>>,
    /// `w_0, …, w_{k*−1}` when recording was requested.
    pub extrapolants: Option<Vec<Vec<f64>>>,
}

impl IterationTrace {
    fn empty(method: Method, problem: &Problem, tau: f64, x0: Vec<f64>) -> Self {
        Self {
            method,
            records: Vec::new(),
            stop_index: 0,
            stop_reason: StopReason::MaxOuter,
            tau,
            delta: problem.delta,
            data_norm: vector::norm(&problem.noisy_data),
            truth_norm: vector::norm(&problem.ground_truth),
            sum_alpha: 0.0,
            sum_theta: 0.0,
            sum_eta: 0.0,
            max_error_sq: 0.0,
            lambda_floor: f64::INFINITY,
            lambda_sum_divergent: true,
            alpha_monotone: true,
            total_inner_iterations: 0,
            final_iterate: x0,
            iterates: None,
            extrapolants: None,
        }
    }

    pub fn relative_error(&self, k: usize) -> Option<f64> {
        let e = self.records.get(k)?.error_norm?;
        Some(if self.truth_norm > 0.0 {
            e / self.truth_norm
        } else {
            e
        })
    }

    pub fn relative_residual(&self, k: usize) -> Option<f64> {
        let r = self.records.get(k)?.residual_norm;
        Some(if self.data_norm > 0.0 {
            r / self.data_norm
        } else {
            r
        })
    }

    pub fn final_relative_error(&self) -> Option<f64> {
        self.relative_error(self.records.len().checked_sub(1)?)
    }
}

/// The moving parts of the implicit iteration: `x_{k−1}`, `x_k` and the
/// bookkeeping accumulated so far.
#[derive(Clone, Debug)]
pub struct IterationState {
    pub x_prev: Vec<f64>,
    pub x_curr: Vec<f64>,
    pub k: usize,
    pub alpha_k: f64,
    pub lambda_k: f64,
    pub sum_theta: f64,
}

impl IterationState {
    /// `x_{−1} := x_0`
    pub fn new(x0: Vec<f64>) -> Self {
        Self {
            x_prev: x0.clone(),
            x_curr: x0,
            k: 0,
            alpha_k: 0.0,
            lambda_k: 0.0,
            sum_theta: 0.0,
        }
    }
}

/// `w_k = x_k + α_k (x_k − x_{k−1})`
pub fn extrapolate(x_curr: &[f64], x_prev: &[f64], alpha_k: f64) -> Result<Vec<f64>> {
    check_dim("extrapolate", x_curr.len(), x_prev.len())?;
    Ok(x_curr
        .iter()
        .zip(x_prev)
        .map(|(c, p)| c + alpha_k * (c - p))
        .collect())
}

/// `‖r‖ ≤ τδ`
pub fn discrepancy_reached(residual_norm: f64, tau: f64, delta: f64) -> bool {
    residual_norm <= tau * delta
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub x_next: Vec<f64>,
    pub inner_iterations: usize,
    /// Residual of the linear system reached by the inner solver.
    pub system_residual: f64,
    pub converged: bool,
}

/// Inner-solve settings for one implicit step.
#[derive(Clone, Copy, Debug)]
pub struct StepSolve<'a> {
    pub solver: InnerSolver,
    pub tol: f64,
    pub max_iter: Option<usize>,
    /// CG starting point; `None` starts from zero.
    pub start: Option<&'a [f64]>,
}

impl Default for StepSolve<'_> {
    fn default() -> Self {
        Self {
            solver: InnerSolver::Auto,
            tol: 1e-12,
            max_iter: None,
            start: None,
        }
    }
}

/// One implicit Tikhonov step: solves `(λ A*A + I) x = w + λ A* y`, i.e.
/// minimizes `λ/2 ‖A x − y‖² + 1/2 ‖x − w‖²`.
///
/// With CG and a starting point `s`, the correction `x − s` is computed from
/// zero, so the relative tolerance refers to the step system's right-hand
/// side.
pub fn tikhonov_step<A: LinearOperator + ?Sized>(
    op: &A,
    w: &[f64],
    lambda: f64,
    data: &[f64],
    solve: StepSolve<'_>,
) -> Result<StepOutcome> {
    check_dim("tikhonov_step w", op.domain_dim(), w.len())?;
    check_dim("tikhonov_step data", op.range_dim(), data.len())?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(
            "lambda",
            format!("must be positive and finite, got {lambda}"),
        ));
    }

    let mut rhs = op.apply_adjoint(data)?;
    for (r, wi) in rhs.iter_mut().zip(w) {
        *r = lambda * *r + wi;
    }

    let spectral = match solve.solver {
        InnerSolver::Cg => None,
        InnerSolver::Auto => op.as_convolution(),
        InnerSolver::Spectral => Some(op.as_convolution().ok_or_else(|| {
            invalid(
                "inner_solver",
                "spectral solve needs a convolution operator",
            )
        })?),
    };
    if let Some(conv) = spectral {
        let x_next = spectral_solve(conv, lambda, &rhs)?;
        return Ok(StepOutcome {
            x_next,
            inner_iterations: 0,
            system_residual: 0.0,
            converged: true,
        });
    }

    let max_iter = solve.max_iter.unwrap_or_else(|| default_max_iter(op));
    let zeros = vec![0.0; w.len()];
    match solve.start {
        Some(start) if start.iter().any(|&v| v != 0.0) => {
            check_dim("tikhonov_step start", w.len(), start.len())?;
            // correction form: G s = rhs − G start
            let mut step_rhs = rhs;
            let a_start = op.apply(start)?;
            let g_start = op.apply_adjoint(&a_start)?;
            for ((r, g), s) in step_rhs.iter_mut().zip(&g_start).zip(start) {
                *r -= lambda * g + s;
            }
            let rep = cg_solve(op, lambda, &step_rhs, &zeros, solve.tol, max_iter)?;
            Ok(StepOutcome {
                x_next: vector::add(start, &rep.solution),
                inner_iterations: rep.iterations,
                system_residual: rep.final_residual_norm,
                converged: rep.converged,
            })
        }
        _ => {
            let rep = cg_solve(op, lambda, &rhs, &zeros, solve.tol, max_iter)?;
            Ok(StepOutcome {
                x_next: rep.solution,
                inner_iterations: rep.iterations,
                system_residual: rep.final_residual_norm,
                converged: rep.converged,
            })
        }
    }
}

/// Per-iterate quantities shared by all runners.
pub(crate) struct Evaluator<'a> {
    pub op: &'a dyn LinearOperator,
    pub data: &'a [f64],
    pub truth: &'a [f64],
}

impl Evaluator<'_> {
    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut r = self.op.apply(x)?;
        vector::axpy(-1.0, self.data, &mut r);
        Ok(r)
    }

    pub fn error(&self, x: &[f64]) -> f64 {
        vector::dist(x, self.truth)
    }

    /// Record for `x_k`, with the step that produced it if any.
    pub fn record(&self, k: usize, x: &[f64], step: Option<StepTaken<'_>>) -> Result<StepRecord> {
        if !vector::all_finite(x) {
            return Err(Error::NonFinite(format!("iterate x_{k}")));
        }
        let r = self.residual(x)?;
        let gradient_norm = vector::norm(&self.op.apply_adjoint(&r)?);
        let mut rec = StepRecord {
            k,
            residual_norm: vector::norm(&r),
            error_norm: Some(self.error(x)),
            alpha: 0.0,
            lambda: 0.0,
            inner_iterations: 0,
            extrapolant_residual: None,
            extrapolant_error: None,
            step_norm: 0.0,
            correction_norm: 0.0,
            gradient_norm,
        };
        if let Some(s) = step {
            rec.alpha = s.alpha;
            rec.lambda = s.lambda;
            rec.inner_iterations = s.inner_iterations;
            rec.extrapolant_residual = Some(vector::norm(&self.residual(s.extrapolant)?));
            rec.extrapolant_error = Some(self.error(s.extrapolant));
            rec.step_norm = vector::dist(x, s.x_prev);
            rec.correction_norm = vector::dist(x, s.extrapolant);
        }
        Ok(rec)
    }
}

/// The step `x_prev → w → x` as seen by [`Evaluator::record`].
pub struct StepTaken<'a> {
    pub x_prev: &'a [f64],
    pub extrapolant: &'a [f64],
    pub alpha: f64,
    pub lambda: f64,
    pub inner_iterations: usize,
}

/// Decides whether to stop at the current record.
pub(crate) fn stop_check(
    rec: &StepRecord,
    tau: f64,
    delta: f64,
    exact_tol: f64,
    data_norm: f64,
) -> Option<StopReason> {
    if delta > 0.0 {
        discrepancy_reached(rec.residual_norm, tau, delta).then_some(StopReason::Discrepancy)
    } else {
        (rec.residual_norm <= exact_tol * data_norm).then_some(StopReason::ExactTol)
    }
}

pub fn initial_guess(problem: &Problem, config: &SolverConfig) -> Vec<f64> {
    vec![config.initial_value; problem.operator.domain_dim()]
}

/// Runs iniT (or iT when `method = It`) with a constant initial guess.
pub fn run_init(problem: &Problem, config: &SolverConfig) -> Result<IterationTrace> {
    run_init_from(problem, config, initial_guess(problem, config))
}

/// Classical iterated Tikhonov: iniT with `α_k ≡ 0`.
pub fn run_it(problem: &Problem, config: &SolverConfig) -> Result<IterationTrace> {
    let cfg = SolverConfig {
        method: Method::It,
        ..config.clone()
    };
    run_init(problem, &cfg)
}

/// Dispatches on `config.method`.
pub fn run(problem: &Problem, config: &SolverConfig) -> Result<IterationTrace> {
    match config.method {
        Method::Init | Method::It => run_init(problem, config),
        Method::Nesterov => run_nesterov(problem, config),
        Method::Fista => run_fista(problem, config),
    }
}

/// Implicit iteration from an explicit `x_0`.
pub fn run_init_from(
    problem: &Problem,
    config: &SolverConfig,
    x0: Vec<f64>,
) -> Result<IterationTrace> {
    config.validate()?;
    problem.validate()?;
    let op: &dyn LinearOperator = problem.operator.as_ref();
    check_dim("initial guess", op.domain_dim(), x0.len())?;
    let inertial = config.method == Method::Init;
    let data = &problem.noisy_data;

    let mut trace = IterationTrace::empty(config.method, problem, config.tau, x0.clone());
    trace.lambda_sum_divergent = config.lambda_schedule.has_divergent_sum();
    if config.max_outer == 0 {
        return Ok(trace);
    }
    let eval = Evaluator {
        op,
        data,
        truth: &problem.ground_truth,
    };
    let mut iterates = config.record_iterates.then(Vec::new);
    let mut extrapolants = config.record_iterates.then(Vec::new);

    let mut state = IterationState::new(x0);
    let mut rec = eval.record(0, &state.x_curr, None)?;
    let mut last_alpha = f64::INFINITY;
    loop {
        let err = rec.error_norm.unwrap_or(0.0);
        trace.max_error_sq = trace.max_error_sq.max(err * err);
        let stop = stop_check(
            &rec,
            config.tau,
            problem.delta,
            config.exact_data_tol,
            trace.data_norm,
        );
        trace.records.push(rec);
        if let Some(v) = iterates.as_mut() {
            v.push(state.x_curr.clone());
        }
        if let Some(reason) = stop {
            trace.stop_reason = reason;
            break;
        }
        if state.k >= config.max_outer {
            trace.stop_reason = StopReason::MaxOuter;
            break;
        }

        let k = state.k;
        let diff_sq = vector::dist_sq(&state.x_curr, &state.x_prev);
        let theta_k = if k == 0 {
            0.0
        } else {
            theta(k, config.theta_exponent)?
        };
        state.alpha_k = match (inertial, config.inertia) {
            (false, _) => 0.0,
            (true, InertiaRule::Adaptive) => inertial_weight(k, diff_sq, theta_k, config.alpha_bar),
            (true, InertiaRule::Constant) => config.alpha_bar,
        };
        state.lambda_k = config.lambda_schedule.value(k)?;
        state.sum_theta += theta_k;

        trace.sum_alpha += state.alpha_k;
        trace.sum_theta = state.sum_theta;
        trace.sum_eta += state.alpha_k * diff_sq;
        trace.lambda_floor = trace.lambda_floor.min(state.lambda_k);
        if state.alpha_k > last_alpha {
            trace.alpha_monotone = false;
        }
        last_alpha = state.alpha_k;

        let w = extrapolate(&state.x_curr, &state.x_prev, state.alpha_k)?;
        let solve = StepSolve {
            solver: config.inner_solver,
            tol: config.inner_tol,
            max_iter: config.inner_max_iter,
            start: config.warm_start.then_some(state.x_curr.as_slice()),
        };
        let out =
            tikhonov_step(op, &w, state.lambda_k, data, solve).map_err(|e| Error::InnerSolve {
                step: k,
                source: Box::new(e),
            })?;
        trace.total_inner_iterations += out.inner_iterations;

        rec = eval.record(
            k + 1,
            &out.x_next,
            Some(StepTaken {
                x_prev: &state.x_curr,
                extrapolant: &w,
                alpha: state.alpha_k,
                lambda: state.lambda_k,
                inner_iterations: out.inner_iterations,
            }),
        )?;
        if let Some(v) = extrapolants.as_mut() {
            v.push(w);
        }
        state.x_prev = std::mem::replace(&mut state.x_curr, out.x_next);
        state.k += 1;
    }

    trace.stop_index = state.k;
    trace.final_iterate = state.x_curr;
    trace.iterates = iterates;
    trace.extrapolants = extrapolants;
    if trace.lambda_floor.is_infinite() {
        trace.lambda_floor = 0.0;
    }
    Ok(trace)
}
