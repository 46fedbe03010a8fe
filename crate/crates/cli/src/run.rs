//! Running a spec with CLI options and writing the artifacts of a run.

use std::fs;
use std::path::Path;

use fpdhf::config::Config;
use fpdhf::{MethodRegistry, ProblemSpec, RunReport, Solver, StepSizes, StopRule, Vector};

use crate::error::{io_error, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone)]
pub struct RunContext {
    pub seed: u64,
    pub stop: StopRule,
    /// Registry name; `None` picks the method from the problem's structure.
    pub method: Option<String>,
}

/// A finished run plus its streamed metrics.
pub struct Captured {
    pub report: RunReport,
    pub metrics_csv: Vec<u8>,
}

pub fn solve_spec(spec: &ProblemSpec, steps: StepSizes, x0: Vector, u0: Vector, ctx: &RunContext) -> CliResult<Captured> {
    let registry = MethodRegistry::builtin();
    let method = ctx.method.as_deref().map(|name| registry.get(name)).transpose()?;
    let mut metrics_csv = Vec::new();
    let mut solver = Solver::new(spec, steps).stop(ctx.stop).metrics_csv(&mut metrics_csv);
    if let Some(m) = method {
        solver = solver.method(m);
    }
    let report = solver.run(x0, u0)?;
    Ok(Captured { report, metrics_csv })
}

/// `component,index,value` rows for the final `x` and `u`.
pub fn solution_csv(report: &RunReport) -> String {
    let mut out = String::from("component,index,value\n");
    for (name, v) in [("x", &report.final_state.x), ("u", &report.final_state.u)] {
        for (i, value) in v.iter().enumerate() {
            out.push_str(&format!("{name},{i},{value}\n"));
        }
    }
    out
}

/// Stamps the run outcome into the `[run]` section of `manifest`.
pub fn stamp_run(manifest: &mut Config, report: &RunReport, steps: &StepSizes, ctx: &RunContext) {
    let mut set = |k: &str, v: String| manifest.set(&format!("run.{k}"), v);
    set("version", VERSION.to_owned());
    set("seed", ctx.seed.to_string());
    set("max_iters", ctx.stop.max_iters.to_string());
    set("tol", ctx.stop.rel_pd_tol.to_string());
    set("method", report.method.to_owned());
    set("tau", steps.tau.to_string());
    set("sigma", steps.sigma.to_string());
    set("epsilon", steps.epsilon.to_string());
    set("termination", report.termination.as_str().to_owned());
    set("iterations", report.iterations().to_string());
    if let Some(last) = report.last() {
        set("final_rel_pd_err", last.rel_pd_err.to_string());
    }
}

pub fn write_artifacts(out: &Path, captured: &Captured, manifest: &Config) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let write = |name: &str, bytes: &[u8]| {
        let path = out.join(name);
        fs::write(&path, bytes).map_err(|e| io_error(&path, e))
    };
    write("metrics.csv", &captured.metrics_csv)?;
    write("solution.csv", solution_csv(&captured.report).as_bytes())?;
    write("manifest.txt", manifest.render().as_bytes())
}
