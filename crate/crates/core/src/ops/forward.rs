use ndarray::{s, ArrayView1};

use super::huber::huber_scalar_grad;
use super::SharedForward;
use crate::error::{check_dim, Error, Result};
use crate::linops::{LinearMap, SharedMap, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardKind {
    /// `‖Tx - Ty‖ <= ζ‖x - y‖`.
    Lipschitz,
    /// `<x - y, Tx - Ty> >= β‖Tx - Ty‖²`.
    Cocoercive,
}

/// A single-valued operator with a declared constant (`ζ` or `β`, by kind).
pub trait ForwardOp: Send + Sync {
    fn dim(&self) -> usize;
    fn kind(&self) -> ForwardKind;
    fn constant(&self) -> f64;
    fn apply(&self, x: ArrayView1<f64>) -> Vector;

    /// Lipschitz constant implied by the declaration (`1/β` when cocoercive).
    fn lipschitz(&self) -> f64 {
        match self.kind() {
            ForwardKind::Lipschitz => self.constant(),
            ForwardKind::Cocoercive => 1.0 / self.constant(),
        }
    }
}

/// A square linear map used as a forward operator, e.g. a skew matrix.
pub struct LinearForward {
    map: SharedMap,
    kind: ForwardKind,
    constant: f64,
}

impl LinearForward {
    /// Lipschitz with `ζ = ‖M‖` taken from the map's certified bound.
    pub fn lipschitz(map: SharedMap) -> Result<Self> {
        Self::check_square(map.as_ref())?;
        let constant = map.norm_bound();
        Ok(Self {
            map,
            kind: ForwardKind::Lipschitz,
            constant,
        })
    }

    /// Cocoercive with a caller-certified `β` (valid e.g. for symmetric
    /// positive semidefinite `M` with `β = 1/‖M‖`).
    pub fn cocoercive(map: SharedMap, beta: f64) -> Result<Self> {
        Self::check_square(map.as_ref())?;
        Ok(Self {
            map,
            kind: ForwardKind::Cocoercive,
            constant: beta,
        })
    }

    fn check_square(map: &dyn LinearMap) -> Result<()> {
        if map.in_dim() != map.out_dim() {
            return Err(Error::contract(format!(
                "forward operator must be square, got {}x{}",
                map.out_dim(),
                map.in_dim()
            )));
        }
        Ok(())
    }
}

impl ForwardOp for LinearForward {
    fn dim(&self) -> usize {
        self.map.in_dim()
    }
    fn kind(&self) -> ForwardKind {
        self.kind
    }
    fn constant(&self) -> f64 {
        self.constant
    }
    fn apply(&self, x: ArrayView1<f64>) -> Vector {
        self.map.apply(x)
    }
}

/// `T*(T·-z)`, the gradient of `½‖T·-z‖²`.
pub fn quadratic_data_gradient(t: &dyn LinearMap, z: ArrayView1<f64>, x: ArrayView1<f64>) -> Result<Vector> {
    check_dim("data gradient observation", t.out_dim(), z.len())?;
    check_dim("data gradient point", t.in_dim(), x.len())?;
    let residual = t.apply(x) - z;
    Ok(t.adjoint(residual.view()))
}

/// [`quadratic_data_gradient`] as a `1/‖T‖²`-cocoercive operator.
pub struct QuadraticDataGradient {
    t: SharedMap,
    z: Vector,
}

impl QuadraticDataGradient {
    pub fn new(t: SharedMap, z: Vector) -> Result<Self> {
        check_dim("data gradient observation", t.out_dim(), z.len())?;
        if !(t.norm_bound() > 0.0) {
            return Err(Error::contract("data operator must have a positive norm bound"));
        }
        Ok(Self { t, z })
    }

    /// `½‖Tx - z‖²`.
    pub fn value(&self, x: ArrayView1<f64>) -> f64 {
        let r = self.t.apply(x) - &self.z;
        0.5 * r.dot(&r)
    }
}

impl ForwardOp for QuadraticDataGradient {
    fn dim(&self) -> usize {
        self.t.in_dim()
    }
    fn kind(&self) -> ForwardKind {
        ForwardKind::Cocoercive
    }
    fn constant(&self) -> f64 {
        let b = self.t.norm_bound();
        1.0 / (b * b)
    }
    fn apply(&self, x: ArrayView1<f64>) -> Vector {
        let residual = self.t.apply(x) - &self.z;
        self.t.adjoint(residual.view())
    }
}

/// `λ W*∇H_δ(W·)`, the gradient of `λ H_δ ∘ W`; Lipschitz with `λ‖W‖²/δ`.
pub struct WeightedHuberGradient {
    transform: SharedMap,
    weight: f64,
    delta: f64,
}

impl WeightedHuberGradient {
    pub fn new(transform: SharedMap, weight: f64, delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !(weight >= 0.0) {
            return Err(Error::contract(format!(
                "huber weight/threshold invalid: weight={weight}, delta={delta}"
            )));
        }
        Ok(Self {
            transform,
            weight,
            delta,
        })
    }

    /// `λ H_δ(Wx)`.
    pub fn value(&self, x: ArrayView1<f64>) -> f64 {
        let w = self.transform.apply(x);
        self.weight * w.iter().map(|&v| super::huber::huber_scalar(self.delta, v)).sum::<f64>()
    }
}

impl ForwardOp for WeightedHuberGradient {
    fn dim(&self) -> usize {
        self.transform.in_dim()
    }
    fn kind(&self) -> ForwardKind {
        ForwardKind::Lipschitz
    }
    fn constant(&self) -> f64 {
        let b = self.transform.norm_bound();
        self.weight * b * b / self.delta
    }
    fn apply(&self, x: ArrayView1<f64>) -> Vector {
        let delta = self.delta;
        let weight = self.weight;
        let g = self
            .transform
            .apply(x)
            .mapv(|v| weight * huber_scalar_grad(delta, v));
        self.transform.adjoint(g.view())
    }
}

type ApplyFn = dyn Fn(ArrayView1<f64>) -> Vector + Send + Sync;

/// Closure-backed forward operator with a caller-declared constant.
pub struct FnForward {
    dim: usize,
    kind: ForwardKind,
    constant: f64,
    f: Box<ApplyFn>,
}

impl FnForward {
    pub fn new<F>(dim: usize, kind: ForwardKind, constant: f64, f: F) -> Self
    where
        F: Fn(ArrayView1<f64>) -> Vector + Send + Sync + 'static,
    {
        Self {
            dim,
            kind,
            constant,
            f: Box::new(f),
        }
    }
}

impl ForwardOp for FnForward {
    fn dim(&self) -> usize {
        self.dim
    }
    fn kind(&self) -> ForwardKind {
        self.kind
    }
    fn constant(&self) -> f64 {
        self.constant
    }
    fn apply(&self, x: ArrayView1<f64>) -> Vector {
        (self.f)(x)
    }
}

/// Blockwise operator `(T_1 x_1, T_2 x_2, ...)`; absent blocks act as zero.
///
/// All present blocks must share one kind. The product of `β_i`-cocoercive
/// blocks is `min β_i`-cocoercive; of `ζ_i`-Lipschitz blocks, `max ζ_i`-Lipschitz.
pub struct ProductForward {
    blocks: Vec<(usize, Option<SharedForward>)>,
    kind: ForwardKind,
    constant: f64,
}

impl ProductForward {
    pub fn new(blocks: Vec<(usize, Option<SharedForward>)>) -> Result<Self> {
        let mut kind = None;
        for (dim, op) in &blocks {
            if let Some(op) = op {
                check_dim("product forward block", *dim, op.dim())?;
                match kind {
                    None => kind = Some(op.kind()),
                    Some(k) if k != op.kind() => {
                        return Err(Error::contract("product forward blocks mix kinds"))
                    }
                    _ => {}
                }
            }
        }
        let kind = kind.ok_or_else(|| Error::contract("product forward has no active block"))?;
        let constants = blocks.iter().filter_map(|(_, op)| op.as_ref().map(|o| o.constant()));
        let constant = match kind {
            ForwardKind::Cocoercive => constants.fold(f64::INFINITY, f64::min),
            ForwardKind::Lipschitz => constants.fold(0.0, f64::max),
        };
        Ok(Self {
            blocks,
            kind,
            constant,
        })
    }
}

impl ForwardOp for ProductForward {
    fn dim(&self) -> usize {
        self.blocks.iter().map(|(d, _)| d).sum()
    }
    fn kind(&self) -> ForwardKind {
        self.kind
    }
    fn constant(&self) -> f64 {
        self.constant
    }
    fn apply(&self, x: ArrayView1<f64>) -> Vector {
        let mut out = Vector::zeros(x.len());
        let mut start = 0;
        for (dim, op) in &self.blocks {
            if let Some(op) = op {
                out.slice_mut(s![start..start + dim])
                    .assign(&op.apply(x.slice(s![start..start + dim])));
            }
            start += dim;
        }
        out
    }
}
