//! Named demonstration problems, each with a built-in correctness check.

use std::collections::BTreeMap;
use std::sync::Arc;

use fpdhf::linops::DenseMatrix;
use fpdhf::multivariate::{BlockProblem, BlockVector};
use fpdhf::ops::{BoxIndicator, FnForward, ForwardKind, L1Norm, LinearForward, ProductForward, QuadraticDataGradient, ZeroOperator};
use fpdhf::saddle::{build_saddle_spec, Bilinear, SaddleProblem};
use fpdhf::{suggest_steps, ProblemSpec, StepSizes, StopRule, Vector};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{CliError, CliResult};
use crate::run::{solve_spec, Captured, RunContext};

/// A scalar compared against a tolerance after a run.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tol: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value <= self.tol
    }
}

pub struct PresetOutcome {
    pub captured: Captured,
    pub steps: StepSizes,
    pub checks: Vec<Check>,
}

pub trait Preset: Send + Sync {
    fn name(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    fn run(&self, ctx: &RunContext) -> CliResult<PresetOutcome>;
}

pub struct PresetRegistry {
    presets: BTreeMap<&'static str, Box<dyn Preset>>,
}

impl PresetRegistry {
    pub fn builtin() -> Self {
        let mut r = Self { presets: BTreeMap::new() };
        r.register(Box::new(ToyQp));
        r.register(Box::new(BilinearSaddle));
        r.register(Box::new(DecoupledBlocks));
        r
    }

    pub fn register(&mut self, preset: Box<dyn Preset>) {
        self.presets.insert(preset.name(), preset);
    }

    pub fn get(&self, name: &str) -> CliResult<&dyn Preset> {
        self.presets.get(name).map(|p| p.as_ref()).ok_or_else(|| {
            let known: Vec<_> = self.presets.keys().copied().collect();
            CliError::usage(format!("unknown preset `{name}` (known: {})", known.join(", ")))
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn Preset> {
        self.presets.values().map(|p| p.as_ref())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal_vec(n: usize, rng: &mut ChaCha8Rng) -> Vector {
    Vector::from_shape_fn(n, |_| StandardNormal.sample(rng))
}

fn normal_mat(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
}

fn max_abs_diff(a: &Vector, b: &Vector) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// `min_{x ∈ [-1,1]^n} ½‖x - a‖² + λ‖x‖₁` with half of the quadratic
/// passed as a Lipschitz field, so every operator slot is used. The
/// minimizer is `clamp(soft(a, λ/(1+μ)), -1, 1)`.
struct ToyQp;

impl ToyQp {
    const DIM: usize = 8;
    const LAMBDA: f64 = 0.5;
    const MU: f64 = 0.5;
}

impl Preset for ToyQp {
    fn name(&self) -> &'static str {
        "toy-qp"
    }
    fn summary(&self) -> &'static str {
        "box-constrained lasso-type quadratic, checked against its closed form"
    }
    fn run(&self, ctx: &RunContext) -> CliResult<PresetOutcome> {
        let n = Self::DIM;
        let a = normal_vec(n, &mut rng(ctx.seed)) * 2.0;
        let a_c = a.clone();
        let spec = ProblemSpec::builder(Arc::new(BoxIndicator::new(n, -1.0, 1.0)?))
            .b(Arc::new(L1Norm::new(n, Self::LAMBDA)))
            .l(Arc::new(fpdhf::linops::Identity { dim: n }))
            .c(Arc::new(FnForward::new(n, ForwardKind::Lipschitz, Self::MU, move |x| {
                (&x - &a_c) * Self::MU
            })))
            .d(Arc::new(QuadraticDataGradient::new(Arc::new(fpdhf::linops::Identity { dim: n }), a.clone())?))
            .build()?;
        let steps = suggest_steps(&spec);
        let captured = solve_spec(&spec, steps, Vector::zeros(n), Vector::zeros(n), ctx)?;
        let t = Self::LAMBDA / (1.0 + Self::MU);
        let oracle = a.mapv(|v| (v.signum() * (v.abs() - t).max(0.0)).clamp(-1.0, 1.0));
        let err = max_abs_diff(&captured.report.final_state.z, &oracle);
        Ok(PresetOutcome {
            captured,
            steps,
            checks: vec![Check {
                name: "max error vs closed form",
                value: err,
                tol: 1e-6,
            }],
        })
    }
}

/// `min_x max_y <Mx, y>` with well-conditioned `M`; the saddle point is 0.
struct BilinearSaddle;

impl Preset for BilinearSaddle {
    fn name(&self) -> &'static str {
        "bilinear-saddle"
    }
    fn summary(&self) -> &'static str {
        "unconstrained bilinear saddle, skew field, solution at the origin"
    }
    fn run(&self, ctx: &RunContext) -> CliResult<PresetOutcome> {
        let n = 3;
        let mut r = rng(ctx.seed);
        let m = Array2::<f64>::eye(n) * 2.0 + normal_mat(n, n, &mut r) * (0.3 / (n as f64).sqrt());
        let mut sp = SaddleProblem::new(Arc::new(ZeroOperator { dim: n }), Arc::new(ZeroOperator { dim: n }));
        sp.psi = Some(Arc::new(Bilinear::new(m)));
        let spec = build_saddle_spec(&sp)?;
        let steps = suggest_steps(&spec);
        let x0 = normal_vec(2 * n, &mut r);
        let captured = solve_spec(&spec, steps, x0, Vector::zeros(spec.dual_dim()), ctx)?;
        let z = &captured.report.final_state.z;
        let residual = z.dot(z).sqrt();
        Ok(PresetOutcome {
            captured,
            steps,
            checks: vec![Check {
                name: "distance to saddle point",
                value: residual,
                tol: 1e-6,
            }],
        })
    }
}

/// Two blocks with no cross terms: the joint run must replay two
/// independent runs exactly.
struct DecoupledBlocks;

struct BlockData {
    a: Arc<dyn fpdhf::ResolventOp>,
    b: Arc<dyn fpdhf::ResolventOp>,
    l: Arc<DenseMatrix>,
    d: Arc<QuadraticDataGradient>,
    c: Arc<LinearForward>,
    x0: Vector,
}

impl BlockData {
    fn spec(&self) -> fpdhf::Result<ProblemSpec> {
        ProblemSpec::builder(self.a.clone())
            .b(self.b.clone())
            .l(self.l.clone())
            .c(self.c.clone())
            .d(self.d.clone())
            .build()
    }
}

fn block(r: &mut ChaCha8Rng, n: usize, m: usize, a: Arc<dyn fpdhf::ResolventOp>, b: Arc<dyn fpdhf::ResolventOp>) -> CliResult<BlockData> {
    let scale = 1.0 / (n as f64).sqrt();
    let data = Array2::<f64>::eye(n) + normal_mat(n, n, r) * (0.2 * scale);
    let target = normal_vec(n, r);
    let g = normal_mat(n, n, r);
    let skew = (&g - &g.t()) * (0.3 * scale);
    Ok(BlockData {
        a,
        b,
        l: Arc::new(DenseMatrix::new(normal_mat(m, n, r) * scale)),
        d: Arc::new(QuadraticDataGradient::new(Arc::new(DenseMatrix::new(data)), target)?),
        c: Arc::new(LinearForward::lipschitz(Arc::new(DenseMatrix::new(skew)))?),
        x0: normal_vec(n, r),
    })
}

impl Preset for DecoupledBlocks {
    fn name(&self) -> &'static str {
        "decoupled-blocks"
    }
    fn summary(&self) -> &'static str {
        "two independent blocks solved jointly, compared with separate runs"
    }
    fn run(&self, ctx: &RunContext) -> CliResult<PresetOutcome> {
        let mut r = rng(ctx.seed);
        let blocks = [
            block(&mut r, 3, 2, Arc::new(BoxIndicator::new(3, -1.0, 1.0)?), Arc::new(L1Norm::new(2, 0.3)))?,
            block(&mut r, 4, 3, Arc::new(L1Norm::new(4, 0.2)), Arc::new(L1Norm::new(3, 0.4)))?,
        ];
        let mut p = BlockProblem::new(
            blocks.iter().map(|b| b.a.clone()).collect(),
            blocks.iter().map(|b| b.b.clone()).collect(),
        );
        for (i, b) in blocks.iter().enumerate() {
            p.set_coupling(i, i, b.l.clone())?;
            p.set_cocoercive(i, b.d.clone())?;
        }
        let c = ProductForward::new(blocks.iter().map(|b| (b.x0.len(), Some(b.c.clone() as fpdhf::SharedForward))).collect())?;
        let p = p.lipschitz(Arc::new(c));
        let spec = p.assemble()?;
        let steps = suggest_steps(&spec);
        let x0 = BlockVector::new(blocks.iter().map(|b| b.x0.clone()).collect());
        let u0 = BlockVector::zeros(&p.dual_dims());
        let captured = solve_spec(&spec, steps, x0.flatten(), u0.flatten(), ctx)?;

        let replay = RunContext {
            stop: StopRule::iterations(captured.report.iterations()),
            ..ctx.clone()
        };
        let mut separate = Vec::new();
        for (b, &m) in blocks.iter().zip(&p.dual_dims()) {
            let single = solve_spec(&b.spec()?, steps, b.x0.clone(), Vector::zeros(m), &replay)?;
            separate.push(single.report.final_state.x);
        }
        let gap = max_abs_diff(&captured.report.final_state.x, &BlockVector::new(separate).flatten());
        Ok(PresetOutcome {
            captured,
            steps,
            checks: vec![Check {
                name: "joint vs separate runs",
                value: gap,
                tol: 1e-12,
            }],
        })
    }
}
