//! Systems of coupled inclusions over a product of primal blocks `x_i` and
//! dual blocks `u_k`:
//!
//! ```text
//! 0 ∈ A_i x_i + Σ_k L_{i,k}* B_k(Σ_j L_{j,k} x_j) + D_i x_i + C_i x
//! ```
//!
//! [`BlockProblem::assemble`] flattens the system into one [`ProblemSpec`]
//! whose linear part is [`BlockCoupling`] with `‖L‖² <= ℓ = Σ_k (Σ_i ‖L_{i,k}‖)²`.
//! Blocks are laid out in index order; a flat vector is the concatenation of
//! its blocks.

use std::sync::Arc;

use ndarray::{s, ArrayView1};

use crate::error::{check_dim, Error, Result};
use crate::linops::{LinearMap, SharedMap, Vector};
use crate::ops::{ForwardKind, ProductForward, ProductResolvent, SharedForward, SharedResolvent};
use crate::problem::{validate_constants, ProblemSpec, StepConstants, StepSizes, StepVerdict};
use crate::solver::{RunReport, Solver, StopRule};

/// A list of per-block vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    pub blocks: Vec<Vector>,
}

impl BlockVector {
    pub fn new(blocks: Vec<Vector>) -> Self {
        Self { blocks }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self::new(dims.iter().map(|&d| Vector::zeros(d)).collect())
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.len()).collect()
    }

    pub fn flatten(&self) -> Vector {
        let mut out = Vector::zeros(self.total_dim());
        let mut start = 0;
        for b in &self.blocks {
            out.slice_mut(s![start..start + b.len()]).assign(b);
            start += b.len();
        }
        out
    }

    pub fn split(flat: ArrayView1<f64>, dims: &[usize]) -> Result<Self> {
        check_dim("block vector", dims.iter().sum(), flat.len())?;
        let mut start = 0;
        let blocks = dims
            .iter()
            .map(|&d| {
                let b = flat.slice(s![start..start + d]).to_owned();
                start += d;
                b
            })
            .collect();
        Ok(Self { blocks })
    }
}

fn offsets(dims: &[usize]) -> Vec<usize> {
    let mut acc = 0;
    dims.iter()
        .map(|d| {
            let o = acc;
            acc += d;
            o
        })
        .collect()
}

/// `x ↦ (Σ_i L_{i,k} x_i)_k` with adjoint `u ↦ (Σ_k L_{i,k}* u_k)_i`.
/// Absent pairs are skipped, never materialized.
pub struct BlockCoupling {
    primal_dims: Vec<usize>,
    dual_dims: Vec<usize>,
    /// Indexed `[i][k]`.
    grid: Vec<Vec<Option<SharedMap>>>,
}

impl BlockCoupling {
    pub fn new(primal_dims: Vec<usize>, dual_dims: Vec<usize>, grid: Vec<Vec<Option<SharedMap>>>) -> Result<Self> {
        check_dim("coupling grid rows", primal_dims.len(), grid.len())?;
        for (i, row) in grid.iter().enumerate() {
            check_dim("coupling grid columns", dual_dims.len(), row.len())?;
            for (k, l) in row.iter().enumerate() {
                if let Some(l) = l {
                    if l.in_dim() != primal_dims[i] || l.out_dim() != dual_dims[k] {
                        return Err(Error::contract(format!(
                            "L[{i}][{k}] is {}x{}, blocks need {}x{}",
                            l.out_dim(),
                            l.in_dim(),
                            dual_dims[k],
                            primal_dims[i]
                        )));
                    }
                }
            }
        }
        Ok(Self {
            primal_dims,
            dual_dims,
            grid,
        })
    }

    /// `ℓ = Σ_k (Σ_i ‖L_{i,k}‖)²` from certified bounds.
    pub fn ell(&self) -> f64 {
        (0..self.dual_dims.len())
            .map(|k| {
                let col: f64 = self
                    .grid
                    .iter()
                    .filter_map(|row| row[k].as_ref().map(|l| l.norm_bound()))
                    .sum();
                col * col
            })
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.iter().flatten().all(Option::is_none)
    }
}

impl LinearMap for BlockCoupling {
    fn in_dim(&self) -> usize {
        self.primal_dims.iter().sum()
    }
    fn out_dim(&self) -> usize {
        self.dual_dims.iter().sum()
    }
    fn apply(&self, x: ArrayView1<f64>) -> Vector {
        let (xo, uo) = (offsets(&self.primal_dims), offsets(&self.dual_dims));
        let mut out = Vector::zeros(self.out_dim());
        for (i, row) in self.grid.iter().enumerate() {
            let xi = x.slice(s![xo[i]..xo[i] + self.primal_dims[i]]);
            for (k, l) in row.iter().enumerate() {
                if let Some(l) = l {
                    let mut dst = out.slice_mut(s![uo[k]..uo[k] + self.dual_dims[k]]);
                    dst += &l.apply(xi);
                }
            }
        }
        out
    }
    fn adjoint(&self, u: ArrayView1<f64>) -> Vector {
        let (xo, uo) = (offsets(&self.primal_dims), offsets(&self.dual_dims));
        let mut out = Vector::zeros(self.in_dim());
        for (i, row) in self.grid.iter().enumerate() {
            let mut dst = out.slice_mut(s![xo[i]..xo[i] + self.primal_dims[i]]);
            for (k, l) in row.iter().enumerate() {
                if let Some(l) = l {
                    dst += &l.adjoint(u.slice(s![uo[k]..uo[k] + self.dual_dims[k]]));
                }
            }
        }
        out
    }
    fn norm_bound(&self) -> f64 {
        self.ell().sqrt()
    }
}

/// A multivariate inclusion. `C` acts on the whole product space; `D_i` and
/// `L_{i,k}` may be absent.
#[derive(Clone)]
pub struct BlockProblem {
    a: Vec<SharedResolvent>,
    b: Vec<SharedResolvent>,
    l: Vec<Vec<Option<SharedMap>>>,
    d: Vec<Option<SharedForward>>,
    c: Option<SharedForward>,
}

impl BlockProblem {
    /// Primal block dimensions come from `a`, dual ones from `b`.
    pub fn new(a: Vec<SharedResolvent>, b: Vec<SharedResolvent>) -> Self {
        let (ni, nk) = (a.len(), b.len());
        Self {
            a,
            b,
            l: vec![vec![None; nk]; ni],
            d: vec![None; ni],
            c: None,
        }
    }

    pub fn primal_dims(&self) -> Vec<usize> {
        self.a.iter().map(|a| a.dim()).collect()
    }

    pub fn dual_dims(&self) -> Vec<usize> {
        self.b.iter().map(|b| b.dim()).collect()
    }

    pub fn set_coupling(&mut self, i: usize, k: usize, l: SharedMap) -> Result<()> {
        let slot = self
            .l
            .get_mut(i)
            .and_then(|row| row.get_mut(k))
            .ok_or_else(|| Error::contract(format!("no block pair ({i}, {k})")))?;
        *slot = Some(l);
        Ok(())
    }

    pub fn coupling(mut self, i: usize, k: usize, l: SharedMap) -> Result<Self> {
        self.set_coupling(i, k, l)?;
        Ok(self)
    }

    pub fn set_cocoercive(&mut self, i: usize, d: SharedForward) -> Result<()> {
        let slot = self
            .d
            .get_mut(i)
            .ok_or_else(|| Error::contract(format!("no primal block {i}")))?;
        *slot = Some(d);
        Ok(())
    }

    pub fn cocoercive(mut self, i: usize, d: SharedForward) -> Result<Self> {
        self.set_cocoercive(i, d)?;
        Ok(self)
    }

    pub fn lipschitz(mut self, c: SharedForward) -> Self {
        self.c = Some(c);
        self
    }

    pub fn coupling_map(&self) -> Result<BlockCoupling> {
        BlockCoupling::new(self.primal_dims(), self.dual_dims(), self.l.clone())
    }

    /// `β = min_i β_i` over present blocks.
    pub fn beta(&self) -> Option<f64> {
        self.d
            .iter()
            .flatten()
            .map(|d| d.constant())
            .reduce(f64::min)
    }

    /// `ℓ = Σ_k (Σ_i ‖L_{i,k}‖)²`.
    pub fn ell_bound(&self) -> Result<f64> {
        Ok(self.coupling_map()?.ell())
    }

    /// Step check with `ℓ` in place of `‖L‖²`.
    pub fn validate(&self, steps: &StepSizes) -> Result<StepVerdict> {
        let constants = StepConstants {
            rho: self.a.iter().map(|a| a.rho()).fold(0.0, f64::min),
            beta: self.beta(),
            zeta: self.c.as_ref().map(|c| c.lipschitz()),
            l_norm: self.ell_bound()?.sqrt(),
        };
        Ok(validate_constants(&constants, steps))
    }

    pub fn assemble(&self) -> Result<ProblemSpec> {
        let primal = self.primal_dims();
        for (i, d) in self.d.iter().enumerate() {
            if let Some(d) = d {
                if d.kind() != ForwardKind::Cocoercive {
                    return Err(Error::contract(format!("D_{i} must be cocoercive")));
                }
            }
        }
        let a: SharedResolvent = if self.a.len() == 1 {
            self.a[0].clone()
        } else {
            Arc::new(ProductResolvent::new(self.a.clone()))
        };
        let mut builder = ProblemSpec::builder(a).dual_dim(self.dual_dims().iter().sum());
        if !self.b.is_empty() {
            let b: SharedResolvent = if self.b.len() == 1 {
                self.b[0].clone()
            } else {
                Arc::new(ProductResolvent::new(self.b.clone()))
            };
            builder = builder.b(b);
        }
        let coupling = self.coupling_map()?;
        if !coupling.is_empty() {
            builder = builder.l(single_or_coupling(&self.l, coupling));
        }
        if self.d.iter().any(Option::is_some) {
            let d: SharedForward = match self.d.as_slice() {
                [Some(d)] => d.clone(),
                _ => Arc::new(ProductForward::new(
                    primal.iter().copied().zip(self.d.iter().cloned()).collect(),
                )?),
            };
            builder = builder.d(d);
        }
        if let Some(c) = &self.c {
            check_dim("coupled C", primal.iter().sum(), c.dim())?;
            builder = builder.c(c.clone());
        }
        builder.build()
    }
}

/// With one pair the map itself is used, so a one-block system runs the
/// exact arithmetic of the unassembled problem.
fn single_or_coupling(grid: &[Vec<Option<SharedMap>>], coupling: BlockCoupling) -> SharedMap {
    match grid {
        [row] if row.len() == 1 => row[0].clone().expect("non-empty coupling"),
        _ => Arc::new(coupling),
    }
}

/// Runs the assembled system after checking the steps against `ℓ`.
pub fn run_multivariate(
    problem: &BlockProblem,
    steps: StepSizes,
    x0: &BlockVector,
    u0: &BlockVector,
    stop: StopRule,
) -> Result<RunReport> {
    if x0.dims() != problem.primal_dims() || u0.dims() != problem.dual_dims() {
        return Err(Error::contract("initial block layout does not match the problem"));
    }
    let verdict = problem.validate(&steps)?;
    if !verdict.is_valid() {
        return Err(Error::InvalidSteps(verdict));
    }
    let spec = problem.assemble()?;
    Solver::new(&spec, steps).stop(stop).run(x0.flatten(), u0.flatten())
}
