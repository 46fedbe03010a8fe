//! `fpdhf`: run presets, problem files, the deblurring experiment and step
//! checks from the command line.
//!
//! Exit codes: 0 on success, 1 when a solver verdict or check fails, 2 on
//! usage and I/O errors.

mod commands;
mod error;
mod presets;
mod problem_file;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{DeblurArgs, SolveArgs, StepArgs, SweepArgs};
use error::CliError;

#[derive(Parser)]
#[command(name = "fpdhf", version, about = "Primal-dual splitting with half-forward correction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named preset or a block problem file.
    Solve(SolveCmd),
    /// Run the image deblurring experiment.
    Deblur(DeblurCmd),
    /// Run deblurring experiments over a parameter grid.
    Sweep(SweepCmd),
    /// Check step sizes against the convergence conditions.
    ValidateSteps(ValidateCmd),
    /// Quick internal consistency checks.
    Selftest,
    /// List the built-in presets and methods.
    List,
}

#[derive(Args)]
struct Common {
    /// Key/value config file with [section] headers.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set deblur.lambda1=0.02`. Repeatable.
    #[arg(long = "set", value_name = "K=V")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Stop once the relative primal-dual error drops to this value.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct SolveCmd {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    preset: Option<String>,
    /// Force a splitting method (fpdhf, fpdhf-d0, condat-vu, fbhf).
    #[arg(long)]
    method: Option<String>,
    /// Directory for metrics.csv, solution.csv and manifest.txt.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DeblurCmd {
    #[command(flatten)]
    common: Common,
    /// PGM image to blur and restore; defaults to a seeded phantom.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = "deblur-out")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepCmd {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Grid axis `KEY=V1,V2,...`; several axes form a cartesian grid.
    #[arg(long, required = true, value_name = "K=V1,V2")]
    vary: Vec<String>,
    /// Experiments run at once.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    #[arg(long, default_value = "sweep-out")]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateCmd {
    /// Cocoercivity constant of D; omit when D = 0.
    #[arg(long)]
    beta: Option<f64>,
    /// Lipschitz constant of C.
    #[arg(long, default_value_t = 0.0)]
    zeta: f64,
    #[arg(long)]
    l_norm: f64,
    /// Strong monotonicity modulus of A (negative for weakly monotone).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    rho: f64,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Defaults to tau/(2 beta).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Use tau^2 beta^2 instead of tau^2 zeta^2 in the recipe's sigma.
    #[arg(long)]
    literal_sigma: bool,
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(s) => commands::solve(SolveArgs {
            preset: s.preset.as_deref(),
            config: s.common.config.as_deref(),
            overrides: &s.common.overrides,
            out: s.out.as_deref(),
            seed: s.common.seed,
            max_iters: s.common.max_iters,
            tol: s.common.tol,
            method: s.method.as_deref(),
        }),
        Command::Deblur(d) => commands::deblur(DeblurArgs {
            config: d.common.config.as_deref(),
            overrides: &d.common.overrides,
            input: d.input.as_deref(),
            seed: d.common.seed,
            max_iters: d.common.max_iters,
            tol: d.common.tol,
            out: &d.out,
        }),
        Command::Sweep(s) => commands::sweep(SweepArgs {
            base: DeblurArgs {
                config: s.common.config.as_deref(),
                overrides: &s.common.overrides,
                input: s.input.as_deref(),
                seed: s.common.seed,
                max_iters: s.common.max_iters,
                tol: s.common.tol,
                out: &s.out,
            },
            vary: &s.vary,
            parallel: s.parallel,
        }),
        Command::ValidateSteps(v) => commands::validate_steps(StepArgs {
            beta: v.beta,
            zeta: v.zeta,
            l_norm: v.l_norm,
            rho: v.rho,
            tau: v.tau,
            sigma: v.sigma,
            epsilon: v.epsilon,
            literal_sigma: v.literal_sigma,
        }),
        Command::Selftest => commands::selftest(),
        Command::List => {
            println!("presets:");
            for p in presets::PresetRegistry::builtin().iter() {
                println!("  {:<18} {}", p.name(), p.summary());
            }
            println!("methods:");
            for m in fpdhf::MethodRegistry::builtin().names() {
                println!("  {m}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
