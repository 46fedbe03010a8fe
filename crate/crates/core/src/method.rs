//! Splitting iterations behind a common [`SplittingMethod`] trait.
//!
//! Built-in methods, registered by name in [`MethodRegistry::builtin`]:
//!
//! | name        | requires      | iteration                                   |
//! |-------------|---------------|---------------------------------------------|
//! | `fpdhf`     | -             | full four-operator primal-dual half-forward |
//! | `fpdhf-d0`  | `D = 0`       | same recursion without the cocoercive term  |
//! | `condat-vu` | `C = 0`       | Condat-Vũ primal-dual step                  |
//! | `fbhf`      | `B = L = 0`   | forward-backward-half-forward               |
//!
//! [`auto_method`] picks the reduced iteration matching the problem's zero
//! markers; every reduction produces the same iterates as `fpdhf` would.

use std::collections::BTreeMap;

use ndarray::ArrayView1;

use crate::error::{Error, Result};
use crate::linops::Vector;
use crate::ops::inverse_resolve_unchecked;
use crate::problem::{validate_steps, ProblemSpec, StepSizes, StepVerdict};

/// Primal-dual iterate `(x_n, u_n)` plus the scratch vectors of the last step.
#[derive(Debug, Clone, PartialEq)]
pub struct IterState {
    pub x: Vector,
    pub u: Vector,
    /// `C x_n` from the last step.
    pub p: Vector,
    /// Resolvent output `z_{n+1}`.
    pub z: Vector,
    /// Half-forward correction `τ(C z_{n+1} - p_{n+1})`.
    pub q: Vector,
    pub n: usize,
}

impl IterState {
    pub fn new(x: Vector, u: Vector) -> Self {
        let nx = x.len();
        Self {
            p: Vector::zeros(nx),
            z: x.clone(),
            q: Vector::zeros(nx),
            x,
            u,
            n: 0,
        }
    }

    pub fn zeros(spec: &ProblemSpec) -> Self {
        Self::new(Vector::zeros(spec.primal_dim()), Vector::zeros(spec.dual_dim()))
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.u.iter()).all(|v| v.is_finite())
    }
}

/// Operator activations, for checking the per-iteration cost of a method.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ActivationCounts {
    pub c: usize,
    pub d: usize,
    pub l: usize,
    pub l_adjoint: usize,
    pub resolvent_a: usize,
    pub resolvent_b_inv: usize,
}

pub trait SplittingMethod: Send + Sync {
    fn name(&self) -> &'static str;

    /// Rejects problems whose zero markers the method cannot honor.
    fn supports(&self, spec: &ProblemSpec) -> Result<()>;

    fn validate(&self, spec: &ProblemSpec, steps: &StepSizes) -> StepVerdict {
        validate_steps(spec, steps)
    }

    /// Advances `state` by one iteration.
    fn step(
        &self,
        spec: &ProblemSpec,
        steps: &StepSizes,
        state: &mut IterState,
        counts: &mut ActivationCounts,
    ) -> Result<()>;
}

fn l_adjoint(spec: &ProblemSpec, u: ArrayView1<f64>, counts: &mut ActivationCounts) -> Vector {
    match spec.l() {
        Some(l) => {
            counts.l_adjoint += 1;
            l.adjoint(u)
        }
        None => Vector::zeros(spec.primal_dim()),
    }
}

fn apply_c(spec: &ProblemSpec, x: ArrayView1<f64>, counts: &mut ActivationCounts) -> Vector {
    match spec.c() {
        Some(c) => {
            counts.c += 1;
            c.apply(x)
        }
        None => Vector::zeros(spec.primal_dim()),
    }
}

fn apply_d(spec: &ProblemSpec, x: ArrayView1<f64>, counts: &mut ActivationCounts) -> Vector {
    match spec.d() {
        Some(d) => {
            counts.d += 1;
            d.apply(x)
        }
        None => Vector::zeros(spec.primal_dim()),
    }
}

fn resolve_a(spec: &ProblemSpec, tau: f64, v: ArrayView1<f64>, counts: &mut ActivationCounts) -> Vector {
    counts.resolvent_a += 1;
    spec.a().resolve(tau, v)
}

/// `u⁺ = J_{σB⁻¹}(u + σ L w)`; with `B = 0` the dual iterate is identically zero.
fn dual_update(
    spec: &ProblemSpec,
    sigma: f64,
    u: ArrayView1<f64>,
    w: ArrayView1<f64>,
    counts: &mut ActivationCounts,
) -> Vector {
    let Some(b) = spec.b() else {
        return Vector::zeros(spec.dual_dim());
    };
    let lw = match spec.l() {
        Some(l) => {
            counts.l += 1;
            l.apply(w)
        }
        None => Vector::zeros(spec.dual_dim()),
    };
    let arg = &u + &(lw * sigma);
    counts.resolvent_b_inv += 1;
    inverse_resolve_unchecked(b, sigma, arg.view())
}

fn check_finite(state: &IterState) -> Result<()> {
    if state.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { iter: state.n })
    }
}

fn check_dims(spec: &ProblemSpec, state: &IterState) -> Result<()> {
    crate::error::check_dim("primal iterate", spec.primal_dim(), state.x.len())?;
    crate::error::check_dim("dual iterate", spec.dual_dim(), state.u.len())
}

/// One iteration of the full recursion; `with_d = false` drops the
/// cocoercive term (the `D = 0` variant).
fn half_forward_step(
    spec: &ProblemSpec,
    steps: &StepSizes,
    state: &mut IterState,
    counts: &mut ActivationCounts,
    with_d: bool,
) -> Result<()> {
    check_dims(spec, state)?;
    let tau = steps.tau;
    let x = &state.x;

    let p = apply_c(spec, x.view(), counts);
    let mut forward = l_adjoint(spec, state.u.view(), counts) + &p;
    if with_d {
        forward = forward + apply_d(spec, x.view(), counts);
    }
    let z = resolve_a(spec, tau, (x - &(forward * tau)).view(), counts);
    let q = (apply_c(spec, z.view(), counts) - &p) * tau;
    let reflected = &(&z * 2.0 - x) - &q;
    let u = dual_update(spec, steps.sigma, state.u.view(), reflected.view(), counts);
    let x_next = &z - &q;

    state.x = x_next;
    state.u = u;
    state.p = p;
    state.z = z;
    state.q = q;
    state.n += 1;
    check_finite(state)
}

/// The four-operator primal-dual iteration:
///
/// ```text
/// p = C x_n
/// z = J_{τA}(x_n - τ(L* u_n + p + D x_n))
/// q = τ(C z - p)
/// u_{n+1} = J_{σB⁻¹}(u_n + σ L(2z - x_n - q))
/// x_{n+1} = z - q
/// ```
#[derive(Debug, Clone, Copy, Default)]
pub struct Fpdhf;

impl SplittingMethod for Fpdhf {
    fn name(&self) -> &'static str {
        "fpdhf"
    }
    fn supports(&self, _spec: &ProblemSpec) -> Result<()> {
        Ok(())
    }
    fn step(&self, spec: &ProblemSpec, steps: &StepSizes, state: &mut IterState, counts: &mut ActivationCounts) -> Result<()> {
        half_forward_step(spec, steps, state, counts, true)
    }
}

/// The recursion for `D = 0`, validated against `τσ‖L‖² + τ²ζ² < 1`.
/// With `C = 0` as well this is the Chambolle-Pock primal-dual iteration.
#[derive(Debug, Clone, Copy, Default)]
pub struct FpdhfNoCocoercive;

impl SplittingMethod for FpdhfNoCocoercive {
    fn name(&self) -> &'static str {
        "fpdhf-d0"
    }
    fn supports(&self, spec: &ProblemSpec) -> Result<()> {
        if spec.d().is_some() {
            return Err(Error::contract("fpdhf-d0 requires D = 0"));
        }
        Ok(())
    }
    fn step(&self, spec: &ProblemSpec, steps: &StepSizes, state: &mut IterState, counts: &mut ActivationCounts) -> Result<()> {
        half_forward_step(spec, steps, state, counts, false)
    }
}

/// `x_{n+1} = J_{τA}(x_n - τ(L* u_n + D x_n))`,
/// `u_{n+1} = J_{σB⁻¹}(u_n + σ L(2x_{n+1} - x_n))`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CondatVu;

impl SplittingMethod for CondatVu {
    fn name(&self) -> &'static str {
        "condat-vu"
    }
    fn supports(&self, spec: &ProblemSpec) -> Result<()> {
        if spec.c().is_some() {
            return Err(Error::contract("condat-vu requires C = 0"));
        }
        Ok(())
    }
    fn step(&self, spec: &ProblemSpec, steps: &StepSizes, state: &mut IterState, counts: &mut ActivationCounts) -> Result<()> {
        check_dims(spec, state)?;
        let tau = steps.tau;
        let x = &state.x;
        let forward = l_adjoint(spec, state.u.view(), counts) + apply_d(spec, x.view(), counts);
        let x_next = resolve_a(spec, tau, (x - &(forward * tau)).view(), counts);
        let reflected = &x_next * 2.0 - x;
        let u = dual_update(spec, steps.sigma, state.u.view(), reflected.view(), counts);

        state.p = Vector::zeros(x.len());
        state.q = Vector::zeros(x.len());
        state.z = x_next.clone();
        state.x = x_next;
        state.u = u;
        state.n += 1;
        check_finite(state)
    }
}

/// `z = J_{τA}(x_n - τ(C x_n + D x_n))`, `x_{n+1} = z - τ(C z - C x_n)`.
/// Reduces to forward-backward when `C = 0` and to Tseng's
/// forward-backward-forward when `D = 0`. The dual iterate is pinned at 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct Fbhf;

impl SplittingMethod for Fbhf {
    fn name(&self) -> &'static str {
        "fbhf"
    }
    fn supports(&self, spec: &ProblemSpec) -> Result<()> {
        if spec.b().is_some() || spec.l().is_some() {
            return Err(Error::contract("fbhf requires B = 0 and L = 0"));
        }
        Ok(())
    }
    fn step(&self, spec: &ProblemSpec, steps: &StepSizes, state: &mut IterState, counts: &mut ActivationCounts) -> Result<()> {
        check_dims(spec, state)?;
        let tau = steps.tau;
        let x = &state.x;
        let cx = apply_c(spec, x.view(), counts);
        let forward = &cx + &apply_d(spec, x.view(), counts);
        let z = resolve_a(spec, tau, (x - &(forward * tau)).view(), counts);
        let q = (apply_c(spec, z.view(), counts) - &cx) * tau;

        state.x = &z - &q;
        state.u = Vector::zeros(spec.dual_dim());
        state.p = cx;
        state.z = z;
        state.q = q;
        state.n += 1;
        check_finite(state)
    }
}

/// Name-indexed collection of splitting methods.
pub struct MethodRegistry {
    methods: BTreeMap<&'static str, Box<dyn SplittingMethod>>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        Self {
            methods: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(Fpdhf));
        r.register(Box::new(FpdhfNoCocoercive));
        r.register(Box::new(CondatVu));
        r.register(Box::new(Fbhf));
        r
    }

    /// Adds `method`, replacing any method registered under the same name.
    pub fn register(&mut self, method: Box<dyn SplittingMethod>) {
        self.methods.insert(method.name(), method);
    }

    pub fn get(&self, name: &str) -> Result<&dyn SplittingMethod> {
        self.methods
            .get(name)
            .map(|m| m.as_ref())
            .ok_or_else(|| Error::UnknownName {
                kind: "method",
                name: name.to_owned(),
            })
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.methods.keys().copied()
    }
}

/// Name of the reduced iteration matching the problem's zero markers.
pub fn auto_method(spec: &ProblemSpec) -> &'static str {
    if spec.c().is_none() {
        "condat-vu"
    } else if spec.b().is_none() && spec.l().is_none() {
        "fbhf"
    } else if spec.d().is_none() {
        "fpdhf-d0"
    } else {
        "fpdhf"
    }
}

/// One step of `method` from a copy of `state`, without touching counters.
pub fn single_step(method: &dyn SplittingMethod, spec: &ProblemSpec, steps: &StepSizes, state: &IterState) -> Result<IterState> {
    let mut next = state.clone();
    method.step(spec, steps, &mut next, &mut ActivationCounts::default())?;
    Ok(next)
}

pub fn fpdhf_step(spec: &ProblemSpec, steps: &StepSizes, state: &IterState) -> Result<IterState> {
    single_step(&Fpdhf, spec, steps, state)
}

pub fn condat_vu_step(spec: &ProblemSpec, steps: &StepSizes, state: &IterState) -> Result<IterState> {
    CondatVu.supports(spec)?;
    single_step(&CondatVu, spec, steps, state)
}

pub fn fbhf_step(spec: &ProblemSpec, steps: &StepSizes, state: &IterState) -> Result<IterState> {
    Fbhf.supports(spec)?;
    single_step(&Fbhf, spec, steps, state)
}

pub fn corollary_d0_step(spec: &ProblemSpec, steps: &StepSizes, state: &IterState) -> Result<IterState> {
    FpdhfNoCocoercive.supports(spec)?;
    single_step(&FpdhfNoCocoercive, spec, steps, state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{DenseMatrix, Identity, SharedMap};
    use crate::ops::{FnForward, ForwardKind, ZeroOperator};
    use ndarray::{array, Array2};
    use std::sync::Arc;

    fn scalar_spec() -> ProblemSpec {
        // B is the normal cone of {0}, so B⁻¹ = 0 and J_{σB⁻¹} = Id.
        let b = crate::ops::FnResolvent::new("origin", 1, 0.0, |_, x| Vector::zeros(x.len()));
        ProblemSpec::builder(Arc::new(ZeroOperator { dim: 1 }))
            .b(Arc::new(b))
            .l(Arc::new(Identity { dim: 1 }))
            .c(Arc::new(FnForward::new(1, ForwardKind::Lipschitz, 0.5, |x| x.mapv(|v| v / 2.0))))
            .d(Arc::new(FnForward::new(1, ForwardKind::Cocoercive, 1.0, |x| x.to_owned())))
            .build()
            .unwrap()
    }

    #[test]
    fn scalar_hand_evaluation() {
        let spec = scalar_spec();
        let steps = StepSizes::new(0.5, 0.5, 0.5);
        let s0 = IterState::new(array![1.0], array![1.0]);
        let s1 = fpdhf_step(&spec, &steps, &s0).unwrap();
        assert_eq!(s1.p[0], 0.5);
        assert_eq!(s1.z[0], -0.25);
        assert_eq!(s1.q[0], -0.3125);
        assert_eq!(s1.u[0], 0.40625);
        assert_eq!(s1.x[0], 0.0625);
    }

    #[test]
    fn zero_operators_fix_the_iterate() {
        let spec = ProblemSpec::builder(Arc::new(ZeroOperator { dim: 2 }))
            .b(Arc::new(crate::ops::FnResolvent::new("origin", 2, 0.0, |_, x| Vector::zeros(x.len()))))
            .l(Arc::new(crate::linops::ZeroMap { in_dim: 2, out_dim: 2 }))
            .c(Arc::new(FnForward::new(2, ForwardKind::Lipschitz, 1.0, |x| Vector::zeros(x.len()))))
            .d(Arc::new(FnForward::new(2, ForwardKind::Cocoercive, 1.0, |x| Vector::zeros(x.len()))))
            .build()
            .unwrap();
        let s0 = IterState::new(array![0.3, -1.0], array![2.0, 5.0]);
        let s1 = fpdhf_step(&spec, &StepSizes::new(0.3, 0.7, 0.5), &s0).unwrap();
        assert_eq!(s1.x, s0.x);
        assert_eq!(s1.u, s0.u);
    }

    #[test]
    fn condat_vu_scalar_substitution() {
        // D = 0, A = 0, J_{σB⁻¹} = Id, L = Id.
        let b = crate::ops::FnResolvent::new("origin", 1, 0.0, |_, x| Vector::zeros(x.len()));
        let spec = ProblemSpec::builder(Arc::new(ZeroOperator { dim: 1 }))
            .b(Arc::new(b))
            .l(Arc::new(Identity { dim: 1 }))
            .build()
            .unwrap();
        let (tau, sigma) = (0.3, 0.6);
        let s0 = IterState::new(array![1.0], array![2.0]);
        let s1 = condat_vu_step(&spec, &StepSizes::new(tau, sigma, 0.0), &s0).unwrap();
        let x1 = 1.0 - tau * 2.0;
        let u1 = 2.0 + sigma * (2.0 * x1 - 1.0);
        assert!((s1.x[0] - x1).abs() < 1e-15);
        assert!((s1.u[0] - u1).abs() < 1e-15);
    }

    #[test]
    fn activation_counts_per_iteration() {
        let m: SharedMap = Arc::new(DenseMatrix::new(Array2::eye(2)));
        let spec = ProblemSpec::builder(Arc::new(ZeroOperator { dim: 2 }))
            .b(Arc::new(crate::ops::L1Norm::new(2, 1.0)))
            .l(m)
            .c(Arc::new(FnForward::new(2, ForwardKind::Lipschitz, 1.0, |x| array![x[1], -x[0]])))
            .d(Arc::new(FnForward::new(2, ForwardKind::Cocoercive, 1.0, |x| x.to_owned())))
            .build()
            .unwrap();
        let mut state = IterState::zeros(&spec);
        let mut counts = ActivationCounts::default();
        for _ in 0..3 {
            Fpdhf.step(&spec, &StepSizes::new(0.1, 0.1, 0.5), &mut state, &mut counts).unwrap();
        }
        assert_eq!(
            counts,
            ActivationCounts {
                c: 6,
                d: 3,
                l: 3,
                l_adjoint: 3,
                resolvent_a: 3,
                resolvent_b_inv: 3
            }
        );
    }

    #[test]
    fn reductions_reject_wrong_problems() {
        let spec = scalar_spec();
        let s = IterState::zeros(&spec);
        let steps = StepSizes::new(0.1, 0.1, 0.5);
        assert!(condat_vu_step(&spec, &steps, &s).is_err());
        assert!(fbhf_step(&spec, &steps, &s).is_err());
        assert!(corollary_d0_step(&spec, &steps, &s).is_err());
        assert_eq!(auto_method(&spec), "fpdhf");
    }

    #[test]
    fn registry_lookup() {
        let r = MethodRegistry::builtin();
        assert_eq!(r.names().collect::<Vec<_>>(), ["condat-vu", "fbhf", "fpdhf", "fpdhf-d0"]);
        assert_eq!(r.get("fbhf").unwrap().name(), "fbhf");
        assert!(matches!(r.get("nope"), Err(Error::UnknownName { .. })));
    }

    #[test]
    fn divergence_is_reported() {
        let spec = ProblemSpec::builder(Arc::new(ZeroOperator { dim: 1 }))
            .d(Arc::new(FnForward::new(1, ForwardKind::Cocoercive, 1.0, |x| x.mapv(|v| v * 1e300))))
            .build()
            .unwrap();
        let s = IterState::new(array![1e10], Vector::zeros(0));
        let err = fbhf_step(&spec, &StepSizes::new(1.0, 1.0, 0.5), &s).unwrap_err();
        assert!(matches!(err, Error::Divergence { iter: 1 }));
    }
}
