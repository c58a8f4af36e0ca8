//! Experiment config files: `key = value` lines grouped under `[section]`
//! headers, `#` or `;` comments.
//!
//! ```text
//! [problem]
//! kind = ipp
//! noise_level = 0.001
//!
//! [solver]            # shared by every [solver.<name>] below
//! tau = 1.5
//!
//! [solver.it]
//! [solver.init]
//!
//! [output]
//! dir = out/ipp
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::iterate::{InertiaRule, InnerSolver, LambdaSchedule, Method, SolverConfig};
use crate::problems::{IppPhantom, NoiseKind, Rect};

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemKind {
    Deblurring {
        height: usize,
        width: usize,
        psf_size: usize,
        psf_sigma: f64,
        /// PGM file replacing the procedural phantom.
        image: Option<PathBuf>,
    },
    Ipp {
        cells: usize,
        grid_m: usize,
        phantom: IppPhantom,
    },
    Dense,
}

impl ProblemKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Deblurring { .. } => "deblurring",
            Self::Ipp { .. } => "ipp",
            Self::Dense => "dense",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub noise_level: f64,
    pub noise_kind: NoiseKind,
    pub seed: u64,
    /// Stop on `noise_level · ‖y‖` instead of the measured noise norm.
    pub nominal_delta: bool,
}

/// Run-time checks that can be attached to an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Diagnostic {
    ResidualMonotonicity,
    ErrorVsExtrapolant,
    KstarBound,
    InertialSummability,
    SequenceLemma,
    SeriesPlateau,
}

impl Diagnostic {
    /// What `diagnostics = all` enables. The series plateau is left out: it
    /// only makes sense on long exact-data runs.
    pub const DEFAULT_SET: [Diagnostic; 5] = [
        Self::ResidualMonotonicity,
        Self::ErrorVsExtrapolant,
        Self::KstarBound,
        Self::InertialSummability,
        Self::SequenceLemma,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "residual_monotonicity" => Self::ResidualMonotonicity,
            "error_vs_extrapolant" => Self::ErrorVsExtrapolant,
            "kstar_bound" => Self::KstarBound,
            "inertial_summability" => Self::InertialSummability,
            "sequence_lemma" => Self::SequenceLemma,
            "series_plateau" => Self::SeriesPlateau,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverEntry {
    /// Section suffix, also the CSV file stem.
    pub name: String,
    pub config: SolverConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub solvers: Vec<SolverEntry>,
    pub output: OutputSpec,
}

fn cfg_err(line: usize, field: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        line,
        field: field.to_owned(),
        reason: reason.into(),
    }
}

#[derive(Debug, Default)]
struct Section {
    header_line: usize,
    entries: BTreeMap<String, (usize, String)>,
    /// Keys that may repeat, in file order.
    repeated: Vec<(String, usize, String)>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| cfg_err(line, key, format!("cannot parse `{v}`"))),
        }
    }

    fn require<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map_or(self.header_line, |e| e.0)
    }

    fn reject_leftovers(&self, section: &str) -> Result<()> {
        if let Some((key, (line, _))) = self.entries.iter().next() {
            return Err(cfg_err(*line, key, format!("unknown key in [{section}]")));
        }
        Ok(())
    }
}

const REPEATABLE: &[&str] = &["inclusion"];

fn split_sections(text: &str) -> Result<Vec<(String, Section)>> {
    let mut sections: Vec<(String, Section)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split(['#', ';']).next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| cfg_err(line, "", "unterminated section header"))?
                .trim();
            if name.is_empty() {
                return Err(cfg_err(line, "", "empty section name"));
            }
            if sections.iter().any(|(n, _)| n == name) {
                return Err(cfg_err(line, name, "duplicate section"));
            }
            sections.push((
                name.to_owned(),
                Section {
                    header_line: line,
                    ..Section::default()
                },
            ));
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| cfg_err(line, "", format!("expected `key = value`, got `{content}`")))?;
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim().to_owned();
        if key.is_empty() {
            return Err(cfg_err(line, "", "empty key"));
        }
        let (_, section) = sections
            .last_mut()
            .ok_or_else(|| cfg_err(line, &key, "key outside of any section"))?;
        if REPEATABLE.contains(&key.as_str()) {
            section.repeated.push((key, line, value));
        } else if section.entries.insert(key.clone(), (line, value)).is_some() {
            return Err(cfg_err(line, &key, "duplicate key"));
        }
    }
    Ok(sections)
}

/// `name(a, b, …)` → `("name", ["a", "b", …])`; a bare word has no args.
fn call_syntax(s: &str) -> Option<(&str, Vec<&str>)> {
    match s.split_once('(') {
        None => Some((s.trim(), Vec::new())),
        Some((name, rest)) => {
            let args = rest.trim().strip_suffix(')')?;
            let args = if args.trim().is_empty() {
                Vec::new()
            } else {
                args.split(',').map(str::trim).collect()
            };
            Some((name.trim(), args))
        }
    }
}

fn parse_floats(args: &[&str], line: usize, field: &str) -> Result<Vec<f64>> {
    args.iter()
        .map(|a| {
            a.parse::<f64>()
                .map_err(|_| cfg_err(line, field, format!("`{a}` is not a number")))
        })
        .collect()
}

fn parse_lambda(value: &str, line: usize) -> Result<LambdaSchedule> {
    let field = "lambda";
    let (name, args) = call_syntax(value).ok_or_else(|| {
        cfg_err(
            line,
            field,
            "expected geometric(r), constant(c) or list(a, b, ...)",
        )
    })?;
    let nums = parse_floats(&args, line, field)?;
    let one = || -> Result<f64> {
        match nums.as_slice() {
            [v] => Ok(*v),
            _ => Err(cfg_err(line, field, format!("{name}(...) takes one value"))),
        }
    };
    let sched = match name {
        "geometric" => LambdaSchedule::Geometric(one()?),
        "constant" => LambdaSchedule::Constant(one()?),
        "list" => LambdaSchedule::Custom(nums.clone()),
        other => return Err(cfg_err(line, field, format!("unknown schedule `{other}`"))),
    };
    sched
        .validate()
        .map_err(|e| cfg_err(line, field, e.to_string()))?;
    Ok(sched)
}

fn parse_bool(value: &str, line: usize, field: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(cfg_err(
            line,
            field,
            format!("expected true/false, got `{value}`"),
        )),
    }
}

fn apply_solver_keys(section: &mut Section, cfg: &mut SolverConfig) -> Result<()> {
    if let Some((line, v)) = section.take("method") {
        cfg.method = Method::parse(&v).ok_or_else(|| {
            cfg_err(
                line,
                "method",
                format!("unknown method `{v}` (init, it, nesterov, fista)"),
            )
        })?;
    }
    if let Some(v) = section.parse("tau")? {
        cfg.tau = v;
    }
    if let Some(v) = section.parse("alpha_bar")? {
        cfg.alpha_bar = v;
    }
    if let Some((line, v)) = section.take("inertia") {
        cfg.inertia = match v.as_str() {
            "adaptive" => InertiaRule::Adaptive,
            "constant" => InertiaRule::Constant,
            _ => return Err(cfg_err(line, "inertia", "expected adaptive or constant")),
        };
    }
    if let Some((line, v)) = section.take("lambda") {
        cfg.lambda_schedule = parse_lambda(&v, line)?;
    }
    if let Some(v) = section.parse("theta_exponent")? {
        cfg.theta_exponent = v;
    }
    if let Some((line, v)) = section.take("inner_solver") {
        cfg.inner_solver = match v.as_str() {
            "auto" => InnerSolver::Auto,
            "cg" => InnerSolver::Cg,
            "spectral" => InnerSolver::Spectral,
            _ => {
                return Err(cfg_err(
                    line,
                    "inner_solver",
                    "expected auto, cg or spectral",
                ))
            }
        };
    }
    if let Some(v) = section.parse("inner_tol")? {
        cfg.inner_tol = v;
    }
    if let Some(v) = section.parse::<usize>("inner_max_iter")? {
        cfg.inner_max_iter = Some(v);
    }
    if let Some((line, v)) = section.take("warm_start") {
        cfg.warm_start = parse_bool(&v, line, "warm_start")?;
    }
    if let Some(v) = section.parse("max_outer")? {
        cfg.max_outer = v;
    }
    if let Some(v) = section.parse("exact_data_tol")? {
        cfg.exact_data_tol = v;
    }
    if let Some(v) = section.parse("nesterov_alpha")? {
        cfg.nesterov_alpha = v;
    }
    if let Some(v) = section.parse("norm_iters")? {
        cfg.norm_iters = v;
    }
    if let Some(v) = section.parse("x0")? {
        cfg.initial_value = v;
    }
    Ok(())
}

fn parse_phantom(section: &mut Section) -> Result<IppPhantom> {
    let (line, value) = section
        .take("phantom")
        .unwrap_or((section.header_line, "default".to_owned()));
    let (name, args) =
        call_syntax(&value).ok_or_else(|| cfg_err(line, "phantom", "malformed phantom"))?;
    let phantom = match name {
        "default" => IppPhantom::default(),
        "constant" => match parse_floats(&args, line, "phantom")?.as_slice() {
            [c] => IppPhantom::Constant(*c),
            _ => return Err(cfg_err(line, "phantom", "constant(c) takes one value")),
        },
        "inclusions" => {
            let background = section.require("background", 1.0)?;
            let mut rects = Vec::new();
            for (_, line, v) in section.repeated.drain(..) {
                match parse_floats(&v.split_whitespace().collect::<Vec<_>>(), line, "inclusion")?
                    .as_slice()
                {
                    &[a0, a1, b0, b1, value] if a0 < a1 && b0 < b1 => rects.push(Rect {
                        a0,
                        a1,
                        b0,
                        b1,
                        value,
                    }),
                    _ => {
                        return Err(cfg_err(
                            line,
                            "inclusion",
                            "expected `a0 a1 b0 b1 value` with a0 < a1, b0 < b1",
                        ))
                    }
                }
            }
            IppPhantom::Inclusions { background, rects }
        }
        other => {
            return Err(cfg_err(
                line,
                "phantom",
                format!("unknown phantom `{other}`"),
            ))
        }
    };
    if let Some((_, line, _)) = section.repeated.first() {
        return Err(cfg_err(
            *line,
            "inclusion",
            "only valid with phantom = inclusions",
        ));
    }
    Ok(phantom)
}

fn parse_problem(mut s: Section, base_dir: &Path) -> Result<ProblemSpec> {
    let (kind_line, kind) = s.take("kind").ok_or_else(|| {
        cfg_err(
            s.header_line,
            "kind",
            "missing problem kind (deblurring, ipp, dense)",
        )
    })?;
    let noise_line = s.line_of("noise_level");
    let noise_level: f64 = s.require("noise_level", 0.0)?;
    if !(noise_level >= 0.0 && noise_level.is_finite()) {
        return Err(cfg_err(
            noise_line,
            "noise_level",
            "must be finite and nonnegative",
        ));
    }
    let seed = s.require("seed", 0u64)?;
    let nominal_delta = match s.take("delta") {
        None => false,
        Some((_, v)) if v == "measured" => false,
        Some((_, v)) if v == "nominal" => true,
        Some((line, _)) => return Err(cfg_err(line, "delta", "expected measured or nominal")),
    };
    let default_noise = if kind == "ipp" {
        NoiseKind::Uniform
    } else {
        NoiseKind::Gaussian
    };
    let noise_kind = match s.take("noise_kind") {
        None => default_noise,
        Some((line, v)) => NoiseKind::parse(&v)
            .ok_or_else(|| cfg_err(line, "noise_kind", "expected uniform or gaussian"))?,
    };

    let positive = |s: &mut Section, key: &str, default: usize| -> Result<usize> {
        let line = s.line_of(key);
        let v: usize = s.require(key, default)?;
        if v == 0 {
            return Err(cfg_err(line, key, "must be positive"));
        }
        Ok(v)
    };
    let problem_kind = match kind.as_str() {
        "deblurring" => {
            let size = positive(&mut s, "size", 256)?;
            let height = positive(&mut s, "height", size)?;
            let width = positive(&mut s, "width", size)?;
            let psf_line = s.line_of("psf_size");
            let largest = height.max(width);
            let psf_size = positive(&mut s, "psf_size", largest + 1 - largest % 2)?;
            if psf_size % 2 == 0 {
                return Err(cfg_err(psf_line, "psf_size", "must be odd"));
            }
            let sigma_line = s.line_of("psf_sigma");
            let psf_sigma: f64 = s.require("psf_sigma", 4.0)?;
            if !(psf_sigma > 0.0) {
                return Err(cfg_err(sigma_line, "psf_sigma", "must be positive"));
            }
            let image = match s.take("image") {
                None => None,
                Some((line, v)) => {
                    let p = base_dir.join(v);
                    if !p.is_file() {
                        return Err(cfg_err(
                            line,
                            "image",
                            format!("file not found: {}", p.display()),
                        ));
                    }
                    Some(p)
                }
            };
            ProblemKind::Deblurring {
                height,
                width,
                psf_size,
                psf_sigma,
                image,
            }
        }
        "ipp" => ProblemKind::Ipp {
            cells: positive(&mut s, "cells", 16)?,
            grid_m: positive(&mut s, "grid_m", 64)?,
            phantom: parse_phantom(&mut s)?,
        },
        "dense" => ProblemKind::Dense,
        other => {
            return Err(cfg_err(
                kind_line,
                "kind",
                format!("unknown problem kind `{other}` (deblurring, ipp, dense)"),
            ))
        }
    };
    if let Some((_, line, _)) = s.repeated.first() {
        return Err(cfg_err(
            *line,
            "inclusion",
            "only valid with phantom = inclusions",
        ));
    }
    s.reject_leftovers("problem")?;
    Ok(ProblemSpec {
        kind: problem_kind,
        noise_level,
        noise_kind,
        seed,
        nominal_delta,
    })
}

fn parse_output(s: Option<Section>) -> Result<OutputSpec> {
    let mut out = OutputSpec {
        dir: PathBuf::from("out"),
        diagnostics: Vec::new(),
    };
    let Some(mut s) = s else {
        return Ok(out);
    };
    if let Some((_, v)) = s.take("dir") {
        out.dir = PathBuf::from(v);
    }
    if let Some((line, v)) = s.take("diagnostics") {
        out.diagnostics = match v.as_str() {
            "none" | "" => Vec::new(),
            "all" => Diagnostic::DEFAULT_SET.to_vec(),
            list => {
                let mut d = list
                    .split(',')
                    .map(|n| {
                        Diagnostic::parse(n.trim()).ok_or_else(|| {
                            cfg_err(
                                line,
                                "diagnostics",
                                format!("unknown diagnostic `{}`", n.trim()),
                            )
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                d.sort();
                d.dedup();
                d
            }
        };
    }
    s.reject_leftovers("output")?;
    Ok(out)
}

/// Validates a solver config and attaches the offending line to errors.
fn validate_solver(
    cfg: &SolverConfig,
    name: &str,
    lines: &BTreeMap<String, usize>,
    header: usize,
) -> Result<()> {
    cfg.validate().map_err(|e| {
        let field = match &e {
            Error::InvalidParameter { name, .. } => match *name {
                "lambda_schedule" => "lambda",
                "initial_value" => "x0",
                n => n,
            },
            _ => "",
        };
        let line = lines.get(field).copied().unwrap_or(header);
        cfg_err(line, field, format!("[solver.{name}]: {e}"))
    })
}

impl ExperimentConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut problem = None;
        let mut output = None;
        let mut shared = Section::default();
        let mut named: Vec<(String, Section)> = Vec::new();
        for (name, section) in split_sections(text)? {
            match name.as_str() {
                "problem" => problem = Some(section),
                "output" => output = Some(section),
                "solver" => shared = section,
                other => match other.strip_prefix("solver.") {
                    Some(n) if !n.is_empty() => named.push((n.to_owned(), section)),
                    _ => {
                        return Err(cfg_err(section.header_line, other, "unknown section"));
                    }
                },
            }
        }
        let problem = parse_problem(
            problem.ok_or_else(|| cfg_err(0, "problem", "missing [problem] section"))?,
            base_dir,
        )?;
        let output = parse_output(output)?;

        if named.is_empty() {
            if shared.entries.is_empty() {
                return Err(cfg_err(
                    0,
                    "solver",
                    "no [solver] or [solver.<name>] section",
                ));
            }
            let method = shared
                .entries
                .get("method")
                .map_or("init".to_owned(), |(_, v)| v.clone());
            named.push((method, std::mem::take(&mut shared)));
        }

        let shared_lines: BTreeMap<String, usize> = shared
            .entries
            .iter()
            .map(|(k, (l, _))| (k.clone(), *l))
            .collect();
        let mut base = SolverConfig {
            seed: problem.seed,
            ..SolverConfig::default()
        };
        apply_solver_keys(&mut shared, &mut base)?;
        shared.reject_leftovers("solver")?;

        let mut solvers = Vec::with_capacity(named.len());
        for (name, mut section) in named {
            if !name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(cfg_err(
                    section.header_line,
                    &name,
                    "solver names may use [A-Za-z0-9_-] only",
                ));
            }
            let mut cfg = base.clone();
            if !section.entries.contains_key("method") {
                if let Some(m) = Method::parse(&name) {
                    cfg.method = m;
                }
            }
            let mut lines = shared_lines.clone();
            lines.extend(section.entries.iter().map(|(k, (l, _))| (k.clone(), *l)));
            apply_solver_keys(&mut section, &mut cfg)?;
            section.reject_leftovers(&format!("solver.{name}"))?;
            validate_solver(&cfg, &name, &lines, section.header_line)?;
            solvers.push(SolverEntry { name, config: cfg });
        }
        Ok(Self {
            problem,
            solvers,
            output,
        })
    }

    /// Reads a config file; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(text, Path::new("."))
    }

    const BASIC: &str = "
[problem]
kind = dense
noise_level = 0.01   # one percent
seed = 4

[solver]
tau = 1.2
lambda = constant(1)

[solver.it]
[solver.fast]
method = init
alpha_bar = 0.3

[output]
dir = /tmp/x
diagnostics = kstar_bound, sequence_lemma
";

    #[test]
    fn parses_shared_and_named_solvers() {
        let c = parse(BASIC).unwrap();
        assert_eq!(c.problem.kind, ProblemKind::Dense);
        assert_eq!(c.problem.seed, 4);
        assert_eq!(c.solvers.len(), 2);
        assert_eq!(c.solvers[0].name, "it");
        assert_eq!(c.solvers[0].config.method, Method::It);
        assert_eq!(c.solvers[1].config.method, Method::Init);
        assert_eq!(c.solvers[1].config.alpha_bar, 0.3);
        assert!(c.solvers.iter().all(|s| s.config.tau == 1.2));
        assert_eq!(
            c.solvers[0].config.lambda_schedule,
            LambdaSchedule::Constant(1.0)
        );
        assert_eq!(
            c.output.diagnostics,
            vec![Diagnostic::KstarBound, Diagnostic::SequenceLemma]
        );
    }

    #[test]
    fn tau_error_names_constraint_and_line() {
        let text = BASIC.replace("tau = 1.2", "tau = 0.5");
        let msg = parse(&text).unwrap_err().to_string();
        assert!(msg.contains("tau > 1"), "{msg}");
        assert!(msg.contains("line 8"), "{msg}");
    }

    #[test]
    fn syntax_errors_carry_line_and_field() {
        let msg = parse("[problem]\nkind = dense\nnoise_level = abc\n[solver]\ntau=2\n")
            .unwrap_err()
            .to_string();
        assert!(
            msg.contains("line 3") && msg.contains("noise_level"),
            "{msg}"
        );
        let msg = parse("[problem]\nkind = dense\nbogus\n")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("line 3"), "{msg}");
        let msg = parse("[problem]\nkind = dense\nfoo = 1\n[solver]\ntau=2\n")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("unknown key") && msg.contains("foo"), "{msg}");
        assert!(parse("[solver]\ntau=2\n").is_err());
    }

    #[test]
    fn ipp_and_deblurring_sections() {
        let c = parse(
            "[problem]\nkind = ipp\ncells = 4\ngrid_m = 16\nphantom = inclusions\nbackground = 0.5\ninclusion = 0 0.5 0 0.5 3\n[solver.init]\nx0 = 1.5\n",
        )
        .unwrap();
        assert_eq!(c.problem.noise_kind, NoiseKind::Uniform);
        match c.problem.kind {
            ProblemKind::Ipp {
                cells,
                phantom: IppPhantom::Inclusions { background, rects },
                ..
            } => {
                assert_eq!(cells, 4);
                assert_eq!(background, 0.5);
                assert_eq!(rects.len(), 1);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(c.solvers[0].config.initial_value, 1.5);

        let c = parse(
            "[problem]\nkind = deblurring\nsize = 32\npsf_size = 9\npsf_sigma = 2\n[solver.it]\n",
        )
        .unwrap();
        assert!(matches!(
            c.problem.kind,
            ProblemKind::Deblurring {
                height: 32,
                width: 32,
                psf_size: 9,
                ..
            }
        ));
        assert!(parse("[problem]\nkind = deblurring\npsf_size = 8\n[solver.it]\n").is_err());
        assert!(
            parse("[problem]\nkind = deblurring\nimage = /no/such.pgm\n[solver.it]\n").is_err()
        );
    }

    #[test]
    fn lambda_syntax() {
        assert_eq!(
            parse_lambda("geometric(1.5)", 1).unwrap(),
            LambdaSchedule::Geometric(1.5)
        );
        assert_eq!(
            parse_lambda("list(1, 2, 4)", 1).unwrap(),
            LambdaSchedule::Custom(vec![1.0, 2.0, 4.0])
        );
        assert!(parse_lambda("geometric(-1)", 1).is_err());
        assert!(parse_lambda("harmonic(1)", 1).is_err());
    }
}
