//! Convex-concave saddle problems
//!
//! ```text
//! min_x max_y  f₁(x) + f₂(L₁x) + f₃(x) + Ψ(x, y) - g₁(y) - g₂(L₂y) - g₃(y)
//! ```
//!
//! cast as one inclusion on `(x, y)`: `A = ∂f₁ × ∂g₁`, `B = ∂f₂ × ∂g₂`,
//! `L = L₁ ⊕ L₂`, `D = (∇f₃, ∇g₃)` and `C = (∇ₓΨ, -∇_yΨ)`.

use std::sync::Arc;

use ndarray::{concatenate, s, ArrayView1, Axis};

use crate::error::{check_dim, Error, Result};
use crate::linops::{BlockDiagonal, DenseMatrix, LinearMap, SharedMap, Vector, ZeroMap};
use crate::method::{ActivationCounts, IterState, SplittingMethod};
use crate::ops::{
    inverse_resolve_unchecked, ForwardKind, ForwardOp, ProductForward, ProductResolvent, SharedForward,
    SharedResolvent, ZeroOperator,
};
use crate::problem::{ProblemSpec, StepSizes};
use crate::solver::{RunReport, Solver, StopRule};

/// The coupling term `Ψ(x, y)`, convex in `x` and concave in `y`.
pub trait SaddleCoupling: Send + Sync {
    fn dims(&self) -> (usize, usize);
    fn grad_x(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Vector;
    fn grad_y(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Vector;
    /// Lipschitz constant `ζ` of `(x, y) ↦ (∇ₓΨ, -∇_yΨ)`.
    fn lipschitz(&self) -> f64;
}

/// `Ψ(x, y) = <Mx, y>`, giving the skew field `(Mᵀy, -Mx)` with `ζ = ‖M‖`.
pub struct Bilinear {
    m: DenseMatrix,
}

impl Bilinear {
    pub fn new(m: ndarray::Array2<f64>) -> Self {
        Self { m: DenseMatrix::new(m) }
    }

    pub fn value(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
        self.m.apply(x).dot(&y)
    }
}

impl SaddleCoupling for Bilinear {
    fn dims(&self) -> (usize, usize) {
        (self.m.in_dim(), self.m.out_dim())
    }
    fn grad_x(&self, _x: ArrayView1<f64>, y: ArrayView1<f64>) -> Vector {
        self.m.adjoint(y)
    }
    fn grad_y(&self, x: ArrayView1<f64>, _y: ArrayView1<f64>) -> Vector {
        self.m.apply(x)
    }
    fn lipschitz(&self) -> f64 {
        self.m.norm_bound()
    }
}

/// `(x, y) ↦ (∇ₓΨ(x, y), -∇_yΨ(x, y))` on the stacked vector.
pub struct SaddleField {
    psi: Arc<dyn SaddleCoupling>,
}

impl SaddleField {
    pub fn new(psi: Arc<dyn SaddleCoupling>) -> Self {
        Self { psi }
    }
}

impl ForwardOp for SaddleField {
    fn dim(&self) -> usize {
        let (n, m) = self.psi.dims();
        n + m
    }
    fn kind(&self) -> ForwardKind {
        ForwardKind::Lipschitz
    }
    fn constant(&self) -> f64 {
        self.psi.lipschitz()
    }
    fn apply(&self, v: ArrayView1<f64>) -> Vector {
        let n = self.psi.dims().0;
        let (x, y) = (v.slice(s![..n]), v.slice(s![n..]));
        let gx = self.psi.grad_x(x, y);
        let gy = -self.psi.grad_y(x, y);
        concatenate(Axis(0), &[gx.view(), gy.view()]).expect("1-d concatenation")
    }
}

/// A dual track: the proximable `f₂` (or `g₂`) and its linear map.
#[derive(Clone)]
pub struct DualTrack {
    pub prox: SharedResolvent,
    pub map: SharedMap,
}

#[derive(Clone)]
pub struct SaddleProblem {
    /// `∂f₁` on `H₁`.
    pub f1: SharedResolvent,
    /// `∂g₁` on `H₂`.
    pub g1: SharedResolvent,
    pub f2: Option<DualTrack>,
    pub g2: Option<DualTrack>,
    /// `∇f₃`, `β₁`-cocoercive.
    pub grad_f3: Option<SharedForward>,
    /// `∇g₃`, `β₂`-cocoercive.
    pub grad_g3: Option<SharedForward>,
    pub psi: Option<Arc<dyn SaddleCoupling>>,
}

impl SaddleProblem {
    pub fn new(f1: SharedResolvent, g1: SharedResolvent) -> Self {
        Self {
            f1,
            g1,
            f2: None,
            g2: None,
            grad_f3: None,
            grad_g3: None,
            psi: None,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.f1.dim(), self.g1.dim())
    }

    fn dual_dims(&self) -> (usize, usize) {
        let d = |t: &Option<DualTrack>| t.as_ref().map_or(0, |t| t.prox.dim());
        (d(&self.f2), d(&self.g2))
    }

    fn check(&self) -> Result<()> {
        let (n1, n2) = self.dims();
        for (track, n) in [(&self.f2, n1), (&self.g2, n2)] {
            if let Some(t) = track {
                check_dim("saddle linear map input", n, t.map.in_dim())?;
                check_dim("saddle linear map output", t.prox.dim(), t.map.out_dim())?;
            }
        }
        for (g, n) in [(&self.grad_f3, n1), (&self.grad_g3, n2)] {
            if let Some(g) = g {
                check_dim("saddle smooth gradient", n, g.dim())?;
            }
        }
        if let Some(psi) = &self.psi {
            if psi.dims() != (n1, n2) {
                return Err(Error::contract(format!(
                    "coupling acts on {:?}, primal spaces are ({n1}, {n2})",
                    psi.dims()
                )));
            }
        }
        Ok(())
    }

    /// Splits a stacked primal (or dual) vector into its two tracks.
    pub fn split_primal<'v>(&self, v: ArrayView1<'v, f64>) -> (ArrayView1<'v, f64>, ArrayView1<'v, f64>) {
        let n1 = self.f1.dim();
        (v.slice_move(s![..n1]), v.slice_move(s![n1..]))
    }
}

/// Builds the product-space inclusion. With `Ψ` absent `C` is the zero
/// marker, so the run dispatches to the Condat-Vũ iteration.
pub fn build_saddle_spec(sp: &SaddleProblem) -> Result<ProblemSpec> {
    sp.check()?;
    let (n1, n2) = sp.dims();
    let (m1, m2) = sp.dual_dims();
    let a: SharedResolvent = Arc::new(ProductResolvent::new(vec![sp.f1.clone(), sp.g1.clone()]));
    let mut builder = ProblemSpec::builder(a).dual_dim(m1 + m2);
    if sp.f2.is_some() || sp.g2.is_some() {
        let prox = |t: &Option<DualTrack>| -> SharedResolvent {
            t.as_ref()
                .map_or_else(|| Arc::new(ZeroOperator { dim: 0 }) as SharedResolvent, |t| t.prox.clone())
        };
        let map = |t: &Option<DualTrack>, n: usize| -> SharedMap {
            t.as_ref()
                .map_or_else(|| Arc::new(ZeroMap { in_dim: n, out_dim: 0 }) as SharedMap, |t| t.map.clone())
        };
        builder = builder
            .b(Arc::new(ProductResolvent::new(vec![prox(&sp.f2), prox(&sp.g2)])))
            .l(Arc::new(BlockDiagonal::new(vec![map(&sp.f2, n1), map(&sp.g2, n2)])));
    }
    if sp.grad_f3.is_some() || sp.grad_g3.is_some() {
        builder = builder.d(Arc::new(ProductForward::new(vec![
            (n1, sp.grad_f3.clone()),
            (n2, sp.grad_g3.clone()),
        ])?));
    }
    if let Some(psi) = &sp.psi {
        builder = builder.c(Arc::new(SaddleField::new(psi.clone())));
    }
    builder.build()
}

/// The recursion written track by track; iterates equal the assembled run.
///
/// ```text
/// p¹ = ∇ₓΨ(x, y)              p² = -∇_yΨ(x, y)
/// z¹ = prox_{τf₁}(x - τ(L₁*u + p¹ + ∇f₃ x))
/// z² = prox_{τg₁}(y - τ(L₂*v + p² + ∇g₃ y))
/// q¹ = τ(∇ₓΨ(z¹, z²) - p¹)     q² = τ(-∇_yΨ(z¹, z²) - p²)
/// u⁺ = prox_{σf₂*}(u + σL₁(2z¹ - x - q¹))
/// v⁺ = prox_{σg₂*}(v + σL₂(2z² - y - q²))
/// x⁺ = z¹ - q¹                 y⁺ = z² - q²
/// ```
pub struct SaddleTwoTrack {
    problem: SaddleProblem,
}

impl SaddleTwoTrack {
    pub fn new(problem: SaddleProblem) -> Result<Self> {
        problem.check()?;
        Ok(Self { problem })
    }

    fn field(&self, x: ArrayView1<f64>, y: ArrayView1<f64>, counts: &mut ActivationCounts) -> (Vector, Vector) {
        match &self.problem.psi {
            Some(psi) => {
                counts.c += 1;
                (psi.grad_x(x, y), -psi.grad_y(x, y))
            }
            None => (Vector::zeros(x.len()), Vector::zeros(y.len())),
        }
    }
}

struct Track<'a> {
    prox: &'a SharedResolvent,
    dual: Option<&'a DualTrack>,
    smooth: Option<&'a SharedForward>,
}

impl Track<'_> {
    fn resolvent_input(
        &self,
        tau: f64,
        x: ArrayView1<f64>,
        u: ArrayView1<f64>,
        p: &Vector,
        counts: &mut ActivationCounts,
    ) -> Vector {
        let mut forward = match self.dual {
            Some(t) => {
                counts.l_adjoint += 1;
                t.map.adjoint(u)
            }
            None => Vector::zeros(x.len()),
        } + p;
        if let Some(g) = self.smooth {
            counts.d += 1;
            forward = forward + g.apply(x);
        }
        counts.resolvent_a += 1;
        self.prox.resolve(tau, (&x - &(forward * tau)).view())
    }

    fn dual_update(&self, sigma: f64, u: ArrayView1<f64>, w: &Vector, counts: &mut ActivationCounts) -> Vector {
        match self.dual {
            Some(t) => {
                counts.l += 1;
                let arg = &u + &(t.map.apply(w.view()) * sigma);
                counts.resolvent_b_inv += 1;
                inverse_resolve_unchecked(t.prox.as_ref(), sigma, arg.view())
            }
            None => Vector::zeros(0),
        }
    }
}

impl SplittingMethod for SaddleTwoTrack {
    fn name(&self) -> &'static str {
        "saddle-two-track"
    }

    fn supports(&self, spec: &ProblemSpec) -> Result<()> {
        let (n1, n2) = self.problem.dims();
        let (m1, m2) = self.problem.dual_dims();
        check_dim("saddle primal space", n1 + n2, spec.primal_dim())?;
        check_dim("saddle dual space", m1 + m2, spec.dual_dim())
    }

    fn step(
        &self,
        _spec: &ProblemSpec,
        steps: &StepSizes,
        state: &mut IterState,
        counts: &mut ActivationCounts,
    ) -> Result<()> {
        let sp = &self.problem;
        let (tau, sigma) = (steps.tau, steps.sigma);
        let m1 = sp.dual_dims().0;
        let (x, y) = sp.split_primal(state.x.view());
        let (u, v) = (state.u.slice(s![..m1]), state.u.slice(s![m1..]));
        let t1 = Track {
            prox: &sp.f1,
            dual: sp.f2.as_ref(),
            smooth: sp.grad_f3.as_ref(),
        };
        let t2 = Track {
            prox: &sp.g1,
            dual: sp.g2.as_ref(),
            smooth: sp.grad_g3.as_ref(),
        };

        let (p1, p2) = self.field(x, y, counts);
        let z1 = t1.resolvent_input(tau, x, u, &p1, counts);
        let z2 = t2.resolvent_input(tau, y, v, &p2, counts);
        let (c1, c2) = self.field(z1.view(), z2.view(), counts);
        let q1 = (c1 - &p1) * tau;
        let q2 = (c2 - &p2) * tau;
        let w1 = &(&z1 * 2.0 - &x) - &q1;
        let w2 = &(&z2 * 2.0 - &y) - &q2;
        let u_next = t1.dual_update(sigma, u, &w1, counts);
        let v_next = t2.dual_update(sigma, v, &w2, counts);
        let x_next = &z1 - &q1;
        let y_next = &z2 - &q2;

        let cat = |a: &Vector, b: &Vector| concatenate(Axis(0), &[a.view(), b.view()]).expect("1-d concatenation");
        state.x = cat(&x_next, &y_next);
        state.u = cat(&u_next, &v_next);
        state.p = cat(&p1, &p2);
        state.z = cat(&z1, &z2);
        state.q = cat(&q1, &q2);
        state.n += 1;
        if state.is_finite() {
            Ok(())
        } else {
            Err(Error::Divergence { iter: state.n })
        }
    }
}

/// Runs the two-track recursion; steps are validated against the assembled
/// constants (`β = min{β₁, β₂}`, `‖L‖ = max{‖L₁‖, ‖L₂‖}`).
pub fn run_saddle(sp: &SaddleProblem, steps: StepSizes, x0: Vector, u0: Vector, stop: StopRule) -> Result<RunReport> {
    let spec = build_saddle_spec(sp)?;
    let method = SaddleTwoTrack::new(sp.clone())?;
    Solver::new(&spec, steps).stop(stop).method(&method).run(x0, u0)
}
