use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use inertial_tikhonov::cli::{
    compare_methods, run_experiment, run_selftest, ExitStatus, Overrides, OUT_DIR_ENV,
};

/// Inertial iterated Tikhonov regularization experiments.
#[derive(Parser, Debug)]
#[command(name = "init-reg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every solver in a config and write one CSV trace per method.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Run at least two methods on one problem and compare their inner work.
    Compare {
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Run the built-in diagnostics suite.
    Selftest {
        /// Flip a sign inside the step identity check.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

#[derive(Args, Debug)]
struct OverrideArgs {
    /// Seed for noise generation (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, env = OUT_DIR_ENV)]
    out_dir: Option<PathBuf>,
    /// Cap on outer iterations for every solver.
    #[arg(long)]
    max_outer: Option<usize>,
}

impl From<OverrideArgs> for Overrides {
    fn from(a: OverrideArgs) -> Self {
        Self {
            seed: a.seed,
            out_dir: a.out_dir,
            max_outer: a.max_outer,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                ExitStatus::Usage.code() as u8
            } else {
                0
            });
        }
    };
    let (mut out, mut err) = (io::stdout().lock(), io::stderr().lock());
    let status = match cli.command {
        Command::Run { config, overrides } => {
            run_experiment(&config, &overrides.into(), &mut out, &mut err)
        }
        Command::Compare { config, overrides } => {
            compare_methods(&config, &overrides.into(), &mut out, &mut err)
        }
        Command::Selftest { inject_fault } => run_selftest(inject_fault, &mut out, &mut err),
    };
    ExitCode::from(status.code() as u8)
}
