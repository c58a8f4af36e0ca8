//! Experiment runner behind the `init-reg` binary: config → problem →
//! solver runs → CSV traces, summaries and check reports.

mod config;

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

pub use config::{Diagnostic, ExperimentConfig, OutputSpec, ProblemKind, ProblemSpec, SolverEntry};

use crate::diagnostics::{
    check_error_vs_extrapolant, check_inertial_summability, check_kstar_bound_from_trace,
    check_residual_monotonicity, check_sequence_lemma, check_series_plateau, run_selftest_suite,
    sequence_lemma_inputs, CheckReport, CheckStatus,
};
use crate::error::{Error, Result};
use crate::iterate::{run, IterationTrace, Method};
use crate::problems::{
    dense_test_problem_with, gaussian_psf, load_pgm, make_deblurring_problem, make_ipp_problem,
    make_phantom_image, Problem,
};

/// Environment variable overriding the output directory (below `--out-dir`).
pub const OUT_DIR_ENV: &str = "INIT_REG_OUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Usage = 1,
    RunFailure = 2,
    DiagnosticFailure = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub max_outer: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            cfg.problem.seed = seed;
            for s in &mut cfg.solvers {
                s.config.seed = seed;
            }
        }
        if let Some(dir) = &self.out_dir {
            cfg.output.dir = dir.clone();
        }
        if let Some(m) = self.max_outer {
            for s in &mut cfg.solvers {
                s.config.max_outer = m;
            }
        }
    }
}

pub fn build_problem(spec: &ProblemSpec) -> Result<Problem> {
    let mut problem = match &spec.kind {
        ProblemKind::Deblurring {
            height,
            width,
            psf_size,
            psf_sigma,
            image,
        } => {
            let img = match image {
                Some(path) => load_pgm(path)?,
                None => make_phantom_image(*height, *width)?,
            };
            let psf = gaussian_psf(*psf_size, *psf_sigma)?;
            make_deblurring_problem(&img, &psf, spec.noise_level, spec.seed)?
        }
        ProblemKind::Ipp {
            cells,
            grid_m,
            phantom,
        } => make_ipp_problem(
            phantom,
            *cells,
            *grid_m,
            spec.noise_level,
            spec.noise_kind,
            spec.seed,
        )?,
        ProblemKind::Dense => {
            dense_test_problem_with(spec.noise_level, spec.noise_kind, spec.seed)?
        }
    };
    if spec.nominal_delta {
        problem.use_nominal_delta();
    }
    Ok(problem)
}

/// Per-iteration trace as CSV: `k,rel_error,rel_residual,alpha_k,lambda_k,inner_iters`.
///
/// Row `k` describes `x_k`; its `alpha_k`, `lambda_k` and `inner_iters` are
/// those of the step that produced `x_k` (zero in row 0).
pub fn trace_csv(trace: &IterationTrace) -> String {
    let mut out = String::from("k,rel_error,rel_residual,alpha_k,lambda_k,inner_iters\n");
    for (k, r) in trace.records.iter().enumerate() {
        let rel_err = trace.relative_error(k).unwrap_or(f64::NAN);
        let rel_res = trace.relative_residual(k).unwrap_or(f64::NAN);
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.k, rel_err, rel_res, r.alpha, r.lambda, r.inner_iterations
        )
        .expect("writing to a String");
    }
    out
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let file_name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{file_name}.{}.tmp", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

#[derive(Debug)]
pub struct MethodOutcome {
    pub name: String,
    pub method: Method,
    pub result: Result<IterationTrace>,
    pub wall_time: Duration,
    pub checks: Vec<CheckReport>,
}

impl MethodOutcome {
    pub fn trace(&self) -> Option<&IterationTrace> {
        self.result.as_ref().ok()
    }
}

fn skipped(name: &str, why: &str) -> CheckReport {
    CheckReport {
        name: name.to_owned(),
        status: CheckStatus::Skipped,
        passed: false,
        max_violation: 0.0,
        tolerance: 0.0,
        samples_checked: 0,
        failing_index: None,
        detail: why.to_owned(),
    }
}

fn run_diagnostics(
    wanted: &[Diagnostic],
    trace: &IterationTrace,
    problem: &Problem,
    alpha_bar: f64,
) -> Result<Vec<CheckReport>> {
    wanted
        .iter()
        .map(|d| {
            let implicit = trace.method.is_implicit();
            Ok(match d {
                Diagnostic::ResidualMonotonicity if implicit => check_residual_monotonicity(
                    trace,
                    problem.operator.as_ref(),
                    &problem.noisy_data,
                )?,
                Diagnostic::ErrorVsExtrapolant if implicit => check_error_vs_extrapolant(trace),
                Diagnostic::KstarBound if implicit => check_kstar_bound_from_trace(trace),
                Diagnostic::InertialSummability if implicit => check_inertial_summability(trace),
                Diagnostic::SequenceLemma if implicit => {
                    let (alphas, phis, etas) = sequence_lemma_inputs(trace);
                    if phis.len() < 2 {
                        skipped("sequence_lemma", "empty trace")
                    } else {
                        let cap = alpha_bar.max(f64::EPSILON);
                        check_sequence_lemma(&alphas, &phis, &etas, cap)?.0
                    }
                }
                Diagnostic::SeriesPlateau if implicit => check_series_plateau(trace),
                other => skipped(&format!("{other:?}"), "implicit methods only"),
            })
        })
        .collect()
}

/// Builds the problem once and runs every solver entry on it, in parallel.
pub fn execute(cfg: &ExperimentConfig) -> Result<(Problem, Vec<MethodOutcome>)> {
    let problem = build_problem(&cfg.problem)?;
    let outcomes = cfg
        .solvers
        .par_iter()
        .map(|entry| {
            let start = Instant::now();
            let result = run(&problem, &entry.config);
            let wall_time = start.elapsed();
            let checks = match &result {
                Ok(trace) => run_diagnostics(
                    &cfg.output.diagnostics,
                    trace,
                    &problem,
                    entry.config.alpha_bar,
                )
                .unwrap_or_else(|e| {
                    let mut r = skipped("diagnostics", &e.to_string());
                    r.status = CheckStatus::Failed;
                    vec![r]
                }),
                Err(_) => Vec::new(),
            };
            MethodOutcome {
                name: entry.name.clone(),
                method: entry.config.method,
                result,
                wall_time,
                checks,
            }
        })
        .collect();
    Ok((problem, outcomes))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_owned(), |x| format!("{x:.6e}"))
}

/// Plain-text summary table of all runs.
pub fn summary_table(problem: &Problem, outcomes: &[MethodOutcome]) -> String {
    let mut s = String::new();
    let data_norm = crate::vector::norm(&problem.noisy_data);
    writeln!(
        s,
        "delta={:.6e} rel_delta={:.6e} unknowns={}",
        problem.delta,
        if data_norm > 0.0 {
            problem.delta / data_norm
        } else {
            0.0
        },
        problem.operator.domain_dim()
    )
    .unwrap();
    writeln!(
        s,
        "{:<12} {:<9} {:>6} {:<12} {:>12} {:>14} {:>10}",
        "name", "method", "k*", "stop", "inner_total", "final_rel_err", "wall_s"
    )
    .unwrap();
    for o in outcomes {
        match &o.result {
            Ok(t) => writeln!(
                s,
                "{:<12} {:<9} {:>6} {:<12} {:>12} {:>14} {:>10.3}",
                o.name,
                o.method.name(),
                t.stop_index,
                t.stop_reason.name(),
                t.total_inner_iterations,
                fmt_opt(t.final_relative_error()),
                o.wall_time.as_secs_f64()
            ),
            Err(e) => writeln!(s, "{:<12} {:<9} FAILED: {e}", o.name, o.method.name()),
        }
        .unwrap();
    }
    s
}

/// Extra inner work of each successful run relative to the cheapest, in percent.
pub fn extra_work_percentages(outcomes: &[MethodOutcome]) -> Vec<(String, Option<f64>)> {
    let cheapest = outcomes
        .iter()
        .filter_map(|o| o.trace().map(|t| t.total_inner_iterations))
        .min();
    outcomes
        .iter()
        .map(|o| {
            let pct = match (o.trace(), cheapest) {
                (Some(t), Some(c)) if c > 0 => {
                    Some(100.0 * (t.total_inner_iterations as f64 - c as f64) / c as f64)
                }
                _ => None,
            };
            (o.name.clone(), pct)
        })
        .collect()
}

fn report_error(err: &mut dyn Write, e: &Error) -> ExitStatus {
    let _ = writeln!(err, "error: {e}");
    match e {
        Error::Config { .. } | Error::InvalidParameter { .. } => ExitStatus::Usage,
        Error::Io(_) => ExitStatus::Usage,
        _ => ExitStatus::RunFailure,
    }
}

fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    overrides.apply(&mut cfg);
    Ok(cfg)
}

/// Writes CSVs, the summary and the check log; returns the exit status.
fn finish(
    cfg: &ExperimentConfig,
    problem: &Problem,
    outcomes: &[MethodOutcome],
    extra: Option<String>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> ExitStatus {
    let dir = &cfg.output.dir;
    let mut status = ExitStatus::Success;
    for o in outcomes {
        match &o.result {
            Ok(t) if t.records.is_empty() => {}
            Ok(t) => {
                let path = dir.join(format!("{}.csv", o.name));
                if let Err(e) = write_atomic(&path, trace_csv(t).as_bytes()) {
                    let _ = writeln!(err, "error: writing {}: {e}", path.display());
                    status = ExitStatus::RunFailure;
                }
            }
            Err(e) => {
                let _ = writeln!(err, "error: {} failed: {e}", o.name);
                status = ExitStatus::RunFailure;
            }
        }
    }

    let mut summary = summary_table(problem, outcomes);
    if let Some(extra) = extra {
        summary.push_str(&extra);
    }
    let mut checks_log = String::new();
    let mut check_lines = String::new();
    for o in outcomes {
        for c in &o.checks {
            let _ = writeln!(check_lines, "{}: {c}", o.name);
            let mut json: serde_json::Value =
                serde_json::from_str(&c.to_json_line()).expect("valid json");
            json["method"] = serde_json::Value::String(o.name.clone());
            let _ = writeln!(checks_log, "{json}");
            if c.is_failure() && status == ExitStatus::Success {
                status = ExitStatus::DiagnosticFailure;
            }
        }
    }
    summary.push_str(&check_lines);
    let _ = out.write_all(summary.as_bytes());

    let mut files = vec![("summary.txt", summary)];
    if !checks_log.is_empty() {
        files.push(("checks.jsonl", checks_log));
    }
    for (name, body) in files {
        let path = dir.join(name);
        if let Err(e) = write_atomic(&path, body.as_bytes()) {
            let _ = writeln!(err, "error: writing {}: {e}", path.display());
            status = ExitStatus::RunFailure;
        }
    }
    status
}

/// `run <config>`: every solver entry, CSV per method, summary.
pub fn run_experiment(
    config_path: &Path,
    overrides: &Overrides,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> ExitStatus {
    let cfg = match load_config(config_path, overrides) {
        Ok(c) => c,
        Err(e) => return report_error(err, &e),
    };
    match execute(&cfg) {
        Ok((problem, outcomes)) => finish(&cfg, &problem, &outcomes, None, out, err),
        Err(e) => report_error(err, &e),
    }
}

/// `compare <config>`: like `run`, plus the extra inner work of each method
/// relative to the cheapest. Needs at least two solver entries.
pub fn compare_methods(
    config_path: &Path,
    overrides: &Overrides,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> ExitStatus {
    let cfg = match load_config(config_path, overrides) {
        Ok(c) => c,
        Err(e) => return report_error(err, &e),
    };
    if cfg.solvers.len() < 2 {
        let _ = writeln!(
            err,
            "error: compare needs at least 2 methods, the config lists {}; add more [solver.<name>] sections",
            cfg.solvers.len()
        );
        return ExitStatus::Usage;
    }
    let (problem, outcomes) = match execute(&cfg) {
        Ok(v) => v,
        Err(e) => return report_error(err, &e),
    };
    let mut extra = String::from("extra inner work vs cheapest:\n");
    for (name, pct) in extra_work_percentages(&outcomes) {
        match pct {
            Some(p) => writeln!(extra, "  {name:<12} {p:+.1}%"),
            None => writeln!(extra, "  {name:<12} n/a"),
        }
        .unwrap();
    }
    finish(&cfg, &problem, &outcomes, Some(extra), out, err)
}

/// `selftest`: the built-in diagnostics suite, one line per check.
pub fn run_selftest(inject_fault: bool, out: &mut dyn Write, err: &mut dyn Write) -> ExitStatus {
    let reports = match run_selftest_suite(inject_fault) {
        Ok(r) => r,
        Err(e) => return report_error(err, &e),
    };
    let mut status = ExitStatus::Success;
    for r in &reports {
        let _ = writeln!(out, "{r}");
        if !r.passed {
            status = ExitStatus::DiagnosticFailure;
        }
    }
    let passed = reports.iter().filter(|r| r.passed).count();
    let _ = writeln!(out, "{passed}/{} checks passed", reports.len());
    status
}
