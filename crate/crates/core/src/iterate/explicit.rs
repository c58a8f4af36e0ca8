//! Explicit two-point baselines: `x_{k+1} = w_k − γ A*(A w_k − y^δ)` with
//! `γ = 1/‖A‖` and either Nesterov's or FISTA's momentum.

use super::schedule::{nesterov_momentum, FistaSequence};
use super::{
    extrapolate, stop_check, Evaluator, IterationTrace, Method, SolverConfig, StepTaken, StopReason,
};
use crate::error::{check_dim, invalid, Result};
use crate::linop::{operator_norm_estimate, LinearOperator};
use crate::problems::Problem;
use crate::vector;

pub fn run_nesterov(problem: &Problem, config: &SolverConfig) -> Result<IterationTrace> {
    let alpha = config.nesterov_alpha;
    run_explicit(problem, config, Method::Nesterov, |k| {
        nesterov_momentum(k, alpha)
    })
}

pub fn run_fista(problem: &Problem, config: &SolverConfig) -> Result<IterationTrace> {
    let mut t = FistaSequence::default();
    run_explicit(problem, config, Method::Fista, move |_| t.advance())
}

fn run_explicit(
    problem: &Problem,
    config: &SolverConfig,
    method: Method,
    mut momentum: impl FnMut(usize) -> f64,
) -> Result<IterationTrace> {
    config.validate()?;
    problem.validate()?;
    let op: &dyn LinearOperator = problem.operator.as_ref();
    let x0 = super::initial_guess(problem, config);
    check_dim("initial guess", op.domain_dim(), x0.len())?;
    let data = &problem.noisy_data;

    let mut trace = IterationTrace::empty(method, problem, config.tau, x0.clone());
    if config.max_outer == 0 {
        return Ok(trace);
    }
    let norm = operator_norm_estimate(op, config.norm_iters, config.seed)?;
    if norm == 0.0 {
        return Err(invalid(
            "operator",
            "zero operator has no gradient step size",
        ));
    }
    // γ = ‖A*A‖^{-1/2}
    let gamma = 1.0 / norm;

    let eval = Evaluator {
        op,
        data,
        truth: &problem.ground_truth,
    };
    let mut iterates = config.record_iterates.then(Vec::new);
    let mut extrapolants = config.record_iterates.then(Vec::new);
    let mut x_prev = x0.clone();
    let mut x_curr = x0;
    let mut k = 0;
    let mut rec = eval.record(0, &x_curr, None)?;
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
            v.push(x_curr.clone());
        }
        if let Some(reason) = stop {
            trace.stop_reason = reason;
            break;
        }
        if k >= config.max_outer {
            trace.stop_reason = StopReason::MaxOuter;
            break;
        }

        let alpha_k = momentum(k);
        trace.sum_alpha += alpha_k;
        let w = extrapolate(&x_curr, &x_prev, alpha_k)?;
        let r = eval.residual(&w)?;
        let g = op.apply_adjoint(&r)?;
        let mut x_next = w.clone();
        vector::axpy(-gamma, &g, &mut x_next);
        trace.total_inner_iterations += 1;

        rec = eval.record(
            k + 1,
            &x_next,
            Some(StepTaken {
                x_prev: &x_curr,
                extrapolant: &w,
                alpha: alpha_k,
                lambda: gamma,
                inner_iterations: 1,
            }),
        )?;
        if let Some(v) = extrapolants.as_mut() {
            v.push(w);
        }
        x_prev = std::mem::replace(&mut x_curr, x_next);
        k += 1;
    }
    trace.stop_index = k;
    trace.final_iterate = x_curr;
    trace.iterates = iterates;
    trace.extrapolants = extrapolants;
    trace.lambda_floor = gamma;
    Ok(trace)
}
