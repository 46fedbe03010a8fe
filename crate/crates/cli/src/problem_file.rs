//! Block problems described in a config file.
//!
//! ```text
//! [primal.0]
//! dim = 3
//! op = box            # box | l1 | simplex | zero
//! lo = -1
//! hi = 1
//! target = 1, 0.5, -2 # optional: D_0 x = x - target
//!
//! [dual.0]
//! dim = 2
//! op = l1             # l1 | box | half-square | zero
//! weight = 0.5
//!
//! [coupling.0.0]
//! matrix = 1, 0, 2; 0, 1, 1
//!
//! [skew]              # optional Lipschitz field over all primal blocks
//! scale = 0.3
//! seed = 7
//!
//! [steps]             # optional; defaults to a conservative choice
//! tau = 0.1
//! sigma = 0.5
//! epsilon = 0.05      # optional; defaults to tau/(2 beta)
//! ```
//!
//! Blocks are numbered from 0 without gaps.

use std::sync::Arc;

use fpdhf::config::Config;
use fpdhf::linops::DenseMatrix;
use fpdhf::multivariate::BlockProblem;
use fpdhf::ops::{BoxIndicator, FnForward, FnResolvent, ForwardKind, L1Norm, LinearForward, SimplexIndicator, ZeroOperator};
use fpdhf::{SharedResolvent, StepSizes, Vector};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{CliError, CliResult};

fn required<T: std::str::FromStr>(cfg: &Config, key: &str) -> CliResult<T> {
    cfg.parse_value(key)?
        .ok_or_else(|| CliError::usage(format!("problem file: missing `{key}`")))
}

fn parse_list(text: &str, key: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::usage(format!("problem file: `{key}` has a non-numeric entry `{}`", t.trim())))
        })
        .collect()
}

fn parse_matrix(text: &str, key: &str) -> CliResult<Array2<f64>> {
    let rows: Vec<Vec<f64>> = text.split(';').map(|r| parse_list(r, key)).collect::<CliResult<_>>()?;
    let cols = rows.first().map_or(0, Vec::len);
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(CliError::usage(format!("problem file: `{key}` rows must be nonempty and equal length")));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((flat.len() / cols, cols), flat).map_err(|e| CliError::usage(e.to_string()))
}

fn resolvent(cfg: &Config, section: &str, dim: usize) -> CliResult<SharedResolvent> {
    let key = |k: &str| format!("{section}.{k}");
    let op: String = required(cfg, &key("op"))?;
    Ok(match op.as_str() {
        "zero" => Arc::new(ZeroOperator { dim }),
        "box" => Arc::new(BoxIndicator::new(dim, required(cfg, &key("lo"))?, required(cfg, &key("hi"))?)?),
        "l1" => Arc::new(L1Norm::new(dim, required(cfg, &key("weight"))?)),
        "simplex" => Arc::new(SimplexIndicator { dim }),
        "half-square" => Arc::new(FnResolvent::new("half-square", dim, 0.0, |tau, x| x.mapv(|v| v / (1.0 + tau)))),
        other => return Err(CliError::usage(format!("problem file: unknown operator `{other}` in [{section}]"))),
    })
}

fn count_sections(cfg: &Config, prefix: &str) -> usize {
    (0..).take_while(|i| cfg.section(&format!("{prefix}.{i}")).is_some()).count()
}

pub struct LoadedProblem {
    pub problem: BlockProblem,
    pub steps: Option<StepSizes>,
}

pub fn load_block_problem(cfg: &Config) -> CliResult<LoadedProblem> {
    let ni = count_sections(cfg, "primal");
    let nk = count_sections(cfg, "dual");
    if ni == 0 || nk == 0 {
        return Err(CliError::usage("problem file needs [primal.0] and [dual.0] sections"));
    }
    let mut pdims = Vec::with_capacity(ni);
    let mut a = Vec::with_capacity(ni);
    for i in 0..ni {
        let section = format!("primal.{i}");
        let dim: usize = required(cfg, &format!("{section}.dim"))?;
        a.push(resolvent(cfg, &section, dim)?);
        pdims.push(dim);
    }
    let mut b = Vec::with_capacity(nk);
    for k in 0..nk {
        let section = format!("dual.{k}");
        let dim: usize = required(cfg, &format!("{section}.dim"))?;
        b.push(resolvent(cfg, &section, dim)?);
    }
    let mut problem = BlockProblem::new(a, b);
    for (i, &dim) in pdims.iter().enumerate() {
        for k in 0..nk {
            let key = format!("coupling.{i}.{k}.matrix");
            if let Some(text) = cfg.get(&key) {
                problem.set_coupling(i, k, Arc::new(DenseMatrix::new(parse_matrix(text, &key)?)))?;
            }
        }
        let key = format!("primal.{i}.target");
        if let Some(text) = cfg.get(&key) {
            let target = Vector::from(parse_list(text, &key)?);
            if target.len() != dim {
                return Err(CliError::usage(format!("problem file: `{key}` needs {dim} entries")));
            }
            let d = FnForward::new(dim, ForwardKind::Cocoercive, 1.0, move |x| &x - &target);
            problem.set_cocoercive(i, Arc::new(d))?;
        }
    }
    if cfg.section("skew").is_some() {
        let n: usize = pdims.iter().sum();
        let scale: f64 = cfg.get_or("skew.scale", 1.0)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.get_or("skew.seed", 0)?);
        let g = Array2::from_shape_fn((n, n), |_| StandardNormal.sample(&mut rng));
        let skew = (&g - &g.t()) * scale;
        problem = problem.lipschitz(Arc::new(LinearForward::lipschitz(Arc::new(DenseMatrix::new(skew)))?));
    }
    let steps = match cfg.section("steps") {
        Some(_) => {
            let tau: f64 = required(cfg, "steps.tau")?;
            let epsilon = match cfg.parse_value("steps.epsilon")? {
                Some(e) => e,
                None => problem.beta().map_or(0.0, |b| tau / (2.0 * b)),
            };
            Some(StepSizes::new(tau, required(cfg, "steps.sigma")?, epsilon))
        }
        None => None,
    };
    Ok(LoadedProblem { problem, steps })
}
