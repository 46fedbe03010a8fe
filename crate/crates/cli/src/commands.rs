use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fpdhf::config::Config;
use fpdhf::deblur::{paper_step_recipe, run_experiment, DeblurConfig, ExperimentReport};
use fpdhf::linops::{adjoint_defect, DiscreteGradient, GaussianBlur, HaarWavelet};
use fpdhf::method::{condat_vu_step, fbhf_step, fpdhf_step};
use fpdhf::multivariate::BlockVector;
use fpdhf::ops::{BoxIndicator, L1Norm, LinearForward, QuadraticDataGradient};
use fpdhf::problem::{epsilon_condat_vu, validate_constants, StepCondition, StepConstants};
use fpdhf::{suggest_steps, IterState, ProblemSpec, StepSizes, StopRule, Vector};
use rayon::prelude::*;

use crate::error::{io_error, CliError, CliResult};
use crate::presets::PresetRegistry;
use crate::problem_file::load_block_problem;
use crate::run::{solve_spec, stamp_run, write_artifacts, RunContext};

/// Shared config handling: file first, then `--set` overrides.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> CliResult<Config> {
    let mut cfg = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for o in overrides {
        cfg.set_override(o)?;
    }
    Ok(cfg)
}

pub struct SolveArgs<'a> {
    pub preset: Option<&'a str>,
    pub config: Option<&'a Path>,
    pub overrides: &'a [String],
    pub out: Option<&'a Path>,
    pub seed: Option<u64>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub method: Option<&'a str>,
}

pub const SOLVE_DEFAULT_STOP: StopRule = StopRule {
    max_iters: 20_000,
    rel_pd_tol: 1e-13,
};

/// Flags win over the `[run]` section of `cfg`, which wins over defaults.
fn solve_context(args: &SolveArgs, cfg: &Config) -> CliResult<RunContext> {
    Ok(RunContext {
        seed: match args.seed {
            Some(s) => s,
            None => cfg.get_or("run.seed", 1)?,
        },
        stop: StopRule {
            max_iters: match args.max_iters {
                Some(n) => n,
                None => cfg.get_or("run.max_iters", SOLVE_DEFAULT_STOP.max_iters)?,
            },
            rel_pd_tol: match args.tol {
                Some(t) => t,
                None => cfg.get_or("run.tol", SOLVE_DEFAULT_STOP.rel_pd_tol)?,
            },
        },
        method: args.method.map(str::to_owned).or_else(|| cfg.get("run.method").map(str::to_owned)),
    })
}

pub fn solve(args: SolveArgs) -> CliResult<()> {
    match (args.preset, args.config) {
        (Some(name), None) => {
            let ctx = &solve_context(&args, &load_config(None, args.overrides)?)?;
            let registry = PresetRegistry::builtin();
            let preset = registry.get(name)?;
            let outcome = preset.run(ctx)?;
            let report = &outcome.captured.report;
            println!(
                "{}: {} after {} iterations ({})",
                preset.name(),
                report.termination.as_str(),
                report.iterations(),
                report.method
            );
            if let Some(out) = args.out {
                let mut manifest = Config::default();
                manifest.set("run.preset", name);
                stamp_run(&mut manifest, report, &outcome.steps, ctx);
                for c in &outcome.checks {
                    manifest.set(&format!("check.{}", c.name.replace(' ', "_")), c.value.to_string());
                }
                write_artifacts(out, &outcome.captured, &manifest)?;
            }
            let mut failed = Vec::new();
            for c in &outcome.checks {
                let verdict = if c.passed() { "ok" } else { "FAILED" };
                println!("  {}: {:.3e} (tolerance {:.0e}) {verdict}", c.name, c.value, c.tol);
                if !c.passed() {
                    failed.push(c.name);
                }
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::domain(format!("check failed: {}", failed.join(", "))))
            }
        }
        (None, Some(path)) => {
            let cfg = load_config(Some(path), args.overrides)?;
            let ctx = &solve_context(&args, &cfg)?;
            let loaded = load_block_problem(&cfg)?;
            let spec = loaded.problem.assemble()?;
            let steps = loaded.steps.unwrap_or_else(|| suggest_steps(&spec));
            let verdict = loaded.problem.validate(&steps)?;
            if !verdict.is_valid() {
                return Err(CliError::domain(format!("step sizes rejected: {verdict}")));
            }
            let x0 = BlockVector::zeros(&loaded.problem.primal_dims()).flatten();
            let u0 = BlockVector::zeros(&loaded.problem.dual_dims()).flatten();
            let captured = solve_spec(&spec, steps, x0, u0, ctx)?;
            let report = &captured.report;
            println!(
                "{}: {} after {} iterations ({})",
                path.display(),
                report.termination.as_str(),
                report.iterations(),
                report.method
            );
            if let Some(last) = report.last() {
                println!("  rel_pd_err {:.6e}", last.rel_pd_err);
            }
            if let Some(out) = args.out {
                let mut manifest = cfg.clone();
                stamp_run(&mut manifest, report, &steps, ctx);
                write_artifacts(out, &captured, &manifest)?;
            }
            Ok(())
        }
        (Some(_), Some(_)) => Err(CliError::usage("give either --preset or --config, not both")),
        (None, None) => Err(CliError::usage("solve needs --preset NAME or --config FILE")),
    }
}

pub struct DeblurArgs<'a> {
    pub config: Option<&'a Path>,
    pub overrides: &'a [String],
    pub input: Option<&'a Path>,
    pub seed: Option<u64>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub out: &'a Path,
}

pub fn deblur_config(args: &DeblurArgs) -> CliResult<DeblurConfig> {
    let cfg = load_config(args.config, args.overrides)?;
    let mut d = DeblurConfig::from_config(&cfg)?;
    if let Some(p) = args.input {
        d.input = Some(p.to_path_buf());
    }
    if let Some(s) = args.seed {
        d.seed = s;
    }
    if let Some(n) = args.max_iters {
        d.max_iters = n;
    }
    if let Some(t) = args.tol {
        d.rel_pd_tol = t;
    }
    if let Some(p) = &d.input {
        if !p.is_file() {
            return Err(CliError::usage(format!("input image {} does not exist", p.display())));
        }
    }
    d.validate()?;
    Ok(d)
}

fn print_deblur(report: &ExperimentReport, out: &Path) {
    let run = &report.run;
    println!("deblur: {} after {} iterations", run.termination.as_str(), run.iterations());
    if let Some(row) = report.final_row() {
        println!("  final objective {:.10e}", row.objective);
        println!("  final rel_pd_err {:.6e}", row.rel_pd_err);
    }
    println!(
        "  psnr observation {:.2} dB, restored {:.2} dB",
        report.psnr_observation(),
        report.psnr_restored()
    );
    println!("  artifacts in {}", out.display());
}

pub fn deblur(args: DeblurArgs) -> CliResult<()> {
    let cfg = deblur_config(&args)?;
    let report = run_experiment(&cfg, args.out)?;
    print_deblur(&report, args.out);
    Ok(())
}

/// `KEY=V1,V2,...` into its key and values.
fn parse_vary(spec: &str) -> CliResult<(String, Vec<String>)> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("--vary expects KEY=V1,V2,... (got `{spec}`)")))?;
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_owned()).filter(|v| !v.is_empty()).collect();
    if key.trim().is_empty() || values.is_empty() {
        return Err(CliError::usage(format!("--vary expects KEY=V1,V2,... (got `{spec}`)")));
    }
    Ok((key.trim().to_owned(), values))
}

/// Every combination of the varied values, first key slowest.
fn grid(axes: &[(String, Vec<String>)]) -> Vec<Vec<(String, String)>> {
    axes.iter().fold(vec![Vec::new()], |acc, (key, values)| {
        acc.into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push((key.clone(), v.clone()));
                    p
                })
            })
            .collect()
    })
}

pub struct SweepArgs<'a> {
    pub base: DeblurArgs<'a>,
    pub vary: &'a [String],
    pub parallel: usize,
}

pub fn sweep(args: SweepArgs) -> CliResult<()> {
    if args.parallel == 0 {
        return Err(CliError::usage("--parallel must be at least 1"));
    }
    let axes: Vec<_> = args.vary.iter().map(|s| parse_vary(s)).collect::<CliResult<_>>()?;
    let points = grid(&axes);
    let configs: Vec<(PathBuf, DeblurConfig)> = points
        .iter()
        .enumerate()
        .map(|(i, point)| {
            let mut overrides = args.base.overrides.to_vec();
            overrides.extend(point.iter().map(|(k, v)| format!("{k}={v}")));
            let cfg = deblur_config(&DeblurArgs {
                overrides: &overrides,
                ..args.base
            })?;
            Ok((args.base.out.join(format!("run-{i:03}")), cfg))
        })
        .collect::<CliResult<_>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.parallel)
        .build()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let results: Vec<CliResult<ExperimentReport>> =
        pool.install(|| configs.par_iter().map(|(dir, cfg)| Ok(run_experiment(cfg, dir)?)).collect());

    let mut summary = String::from("run");
    for (key, _) in &axes {
        summary.push_str(&format!(",{key}"));
    }
    summary.push_str(",termination,iterations,final_objective,final_rel_pd_err,psnr_restored\n");
    let mut failures = Vec::new();
    for (i, (point, result)) in points.iter().zip(results).enumerate() {
        let values: String = point.iter().map(|(_, v)| format!(",{v}")).collect();
        match result {
            Ok(r) => {
                let (obj, err) = r.final_row().map_or((f64::NAN, f64::NAN), |row| (row.objective, row.rel_pd_err));
                summary.push_str(&format!(
                    "run-{i:03}{values},{},{},{obj},{err},{}\n",
                    r.run.termination.as_str(),
                    r.run.iterations(),
                    r.psnr_restored()
                ));
                println!("run-{i:03}{values}: rel_pd_err {err:.3e}, psnr {:.2} dB", r.psnr_restored());
            }
            Err(e) => {
                println!("run-{i:03}{values}: {e}");
                failures.push(e);
            }
        }
    }
    fs::create_dir_all(args.base.out).map_err(|e| io_error(args.base.out, e))?;
    let path = args.base.out.join("summary.csv");
    fs::write(&path, summary).map_err(|e| io_error(&path, e))?;
    match failures.into_iter().next() {
        None => Ok(()),
        Some(e) => Err(e),
    }
}

pub struct StepArgs {
    pub beta: Option<f64>,
    pub zeta: f64,
    pub l_norm: f64,
    pub rho: f64,
    pub tau: Option<f64>,
    pub sigma: Option<f64>,
    pub epsilon: Option<f64>,
    pub literal_sigma: bool,
}

fn condition_label(c: StepCondition) -> &'static str {
    match c {
        StepCondition::Positive => "positive steps",
        StepCondition::SingleValued => "single-valued resolvent",
        StepCondition::EpsilonRange => "epsilon range",
        StepCondition::CocoerciveStep => "cocoercive step",
        StepCondition::Contraction => "contraction",
        StepCondition::ContractionNoCocoercive => "contraction (no cocoercive term)",
    }
}

pub fn validate_steps(a: StepArgs) -> CliResult<()> {
    let finite_pos = |v: f64| v.is_finite() && v > 0.0;
    if !finite_pos(a.l_norm) || a.beta.is_some_and(|b| !finite_pos(b)) || !(a.zeta.is_finite() && a.zeta >= 0.0) {
        return Err(CliError::usage("--l-norm and --beta must be positive, --zeta nonnegative"));
    }
    let steps = match (a.tau, a.sigma) {
        (None, None) => {
            let beta = a
                .beta
                .ok_or_else(|| CliError::usage("without --tau/--sigma the step recipe needs --beta"))?;
            let recipe = paper_step_recipe(beta, a.zeta, a.l_norm, a.literal_sigma)?;
            println!("steps from recipe (epsilon = 0.8/(1+sqrt(1+16 beta^2)), tau = 2 beta epsilon)");
            if let Some(f) = recipe.sigma_shrink {
                println!("  sigma shrunk by factor {f} to satisfy the contraction bound");
            }
            recipe.steps
        }
        (Some(tau), Some(sigma)) => {
            let epsilon = match (a.epsilon, a.beta) {
                (Some(e), _) => e,
                (None, Some(b)) => epsilon_condat_vu(tau, b),
                (None, None) => 0.0,
            };
            StepSizes::new(tau, sigma, epsilon)
        }
        _ => return Err(CliError::usage("give both --tau and --sigma, or neither")),
    };
    let k = StepConstants {
        rho: a.rho,
        beta: a.beta,
        zeta: (a.zeta > 0.0).then_some(a.zeta),
        l_norm: a.l_norm,
    };
    println!(
        "constants: beta={} zeta={} |L|={} rho={}",
        a.beta.map_or_else(|| "none".to_owned(), |b| b.to_string()),
        a.zeta,
        a.l_norm,
        a.rho
    );
    println!("steps: tau={} sigma={} epsilon={}", steps.tau, steps.sigma, steps.epsilon);
    let verdict = validate_constants(&k, &steps);
    for c in &verdict.checks {
        println!(
            "  [{}] {:<34} {:<46} slack {:+.6e}",
            if c.holds { "ok" } else { "FAIL" },
            condition_label(c.condition),
            c.condition.formula(),
            c.slack()
        );
    }
    if let Some(beta) = a.beta {
        let cv_eps = epsilon_condat_vu(steps.tau, beta);
        if k.zeta.is_none() && (steps.epsilon - cv_eps).abs() <= 1e-12 * cv_eps.max(1.0) {
            let lhs = steps.sigma * steps.tau * a.l_norm * a.l_norm;
            let rhs = 1.0 - steps.tau / (2.0 * beta);
            println!(
                "  condat-vu form: sigma*tau*|L|^2 < 1 - tau/(2*beta): {lhs:.6e} < {rhs:.6e} ({})",
                if lhs < rhs { "holds" } else { "fails" }
            );
        }
    }
    if verdict.is_valid() {
        println!("valid");
        Ok(())
    } else {
        let names: Vec<_> = verdict.violations().map(|c| condition_label(c.condition)).collect();
        println!("invalid: {}", names.join(", "));
        Err(CliError::domain(format!("step sizes rejected: {verdict}")))
    }
}

fn max_abs_diff(a: &Vector, b: &Vector) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// Trajectory gap between `fpdhf_step` and a reduction over `iters` steps.
fn reduction_gap(
    spec: &ProblemSpec,
    steps: &StepSizes,
    reduced: fn(&ProblemSpec, &StepSizes, &IterState) -> fpdhf::Result<IterState>,
    iters: usize,
) -> fpdhf::Result<f64> {
    let n = spec.primal_dim();
    let x0 = Vector::from_shape_fn(n, |i| ((i * 7 + 3) % 11) as f64 / 5.0 - 1.0);
    let mut a = IterState::new(x0.clone(), Vector::zeros(spec.dual_dim()));
    let mut b = a.clone();
    let mut gap: f64 = 0.0;
    for _ in 0..iters {
        a = fpdhf_step(spec, steps, &a)?;
        b = reduced(spec, steps, &b)?;
        gap = gap.max(max_abs_diff(&a.x, &b.x)).max(max_abs_diff(&a.u, &b.u));
    }
    Ok(gap)
}

fn selftest_checks() -> fpdhf::Result<Vec<(&'static str, f64, f64)>> {
    let n = 6;
    let diag = Vector::from_shape_fn(n, |i| 1.0 + i as f64 / n as f64);
    let data = Arc::new(fpdhf::linops::DenseMatrix::new(ndarray::Array2::from_diag(&diag)));
    let target = Vector::from_shape_fn(n, |i| (i as f64 - 2.5) / 2.0);
    let l = Arc::new(fpdhf::linops::DenseMatrix::new(ndarray::Array2::from_shape_fn((4, n), |(i, j)| {
        ((i + 2 * j) % 5) as f64 / 5.0 - 0.4
    })));
    let d = Arc::new(QuadraticDataGradient::new(data, target)?);
    let cv = ProblemSpec::builder(Arc::new(BoxIndicator::new(n, -1.0, 1.0)?))
        .b(Arc::new(L1Norm::new(4, 0.3)))
        .l(l)
        .d(d.clone())
        .build()?;
    let skew = ndarray::Array2::from_shape_fn((n, n), |(i, j)| (j as f64 - i as f64) / 10.0);
    let fb = ProblemSpec::builder(Arc::new(L1Norm::new(n, 0.2)))
        .c(Arc::new(LinearForward::lipschitz(Arc::new(fpdhf::linops::DenseMatrix::new(skew)))?))
        .d(d)
        .build()?;

    let mut checks = vec![
        ("condat-vu reduction gap", reduction_gap(&cv, &suggest_steps(&cv), condat_vu_step, 100)?, 1e-12),
        ("fbhf reduction gap", reduction_gap(&fb, &suggest_steps(&fb), fbhf_step, 100)?, 1e-12),
        ("gradient adjoint defect", adjoint_defect(&DiscreteGradient { rows: 8, cols: 9 }, 50, 1), 1e-10),
        ("blur adjoint defect", adjoint_defect(&GaussianBlur::new(16, 16, 9, 4.0)?, 50, 2), 1e-10),
        ("haar adjoint defect", adjoint_defect(&HaarWavelet::new(16, 16, 3)?, 50, 3), 1e-10),
    ];
    let ctx = RunContext {
        seed: 1,
        stop: StopRule {
            max_iters: 20_000,
            rel_pd_tol: 1e-13,
        },
        method: None,
    };
    for preset in PresetRegistry::builtin().iter() {
        let outcome = preset.run(&ctx).map_err(|e| fpdhf::Error::Contract(e.to_string()))?;
        for c in outcome.checks {
            checks.push((preset.name(), c.value, c.tol));
        }
    }
    Ok(checks)
}

pub fn selftest() -> CliResult<()> {
    let checks = selftest_checks()?;
    let mut failed = 0;
    for (name, value, tol) in &checks {
        let ok = value <= tol;
        failed += usize::from(!ok);
        println!("{} {name}: {value:.3e} (tolerance {tol:.0e})", if ok { "PASS" } else { "FAIL" });
    }
    println!("selftest: {} passed, {failed} failed", checks.len() - failed);
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::domain(format!("{failed} selftest checks failed")))
    }
}
