//! Problem data and step-size theory.
//!
//! A [`ProblemSpec`] describes the inclusion
//!
//! ```text
//! find (x, u) with   0 ∈ (A + C + D) x + L* u,   0 ∈ B⁻¹ u - L x
//! ```
//!
//! where `A` is maximally `ρ`-monotone, `B` maximally monotone, `L` linear,
//! `C` `ζ`-Lipschitz and `D` `β`-cocoercive. Absent operators are explicit
//! `None` markers, which is also how the solver picks a reduced iteration.

use std::fmt;

use crate::error::{Error, Result};
use crate::linops::{LinearMap, SharedMap};
use crate::ops::{ForwardKind, ResolventOp, SharedForward, SharedResolvent};

#[derive(Clone)]
pub struct ProblemSpec {
    a: SharedResolvent,
    b: Option<SharedResolvent>,
    l: Option<SharedMap>,
    c: Option<SharedForward>,
    d: Option<SharedForward>,
    dual_dim: usize,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("a", &self.a.name())
            .field("b", &self.b.as_ref().map(|b| b.name().to_owned()))
            .field("has_l", &self.l.is_some())
            .field("zeta", &self.zeta())
            .field("beta", &self.beta())
            .field("primal_dim", &self.primal_dim())
            .field("dual_dim", &self.dual_dim)
            .finish()
    }
}

pub struct ProblemBuilder {
    a: SharedResolvent,
    b: Option<SharedResolvent>,
    l: Option<SharedMap>,
    c: Option<SharedForward>,
    d: Option<SharedForward>,
    dual_dim: Option<usize>,
}

impl ProblemBuilder {
    pub fn b(mut self, b: SharedResolvent) -> Self {
        self.b = Some(b);
        self
    }

    pub fn l(mut self, l: SharedMap) -> Self {
        self.l = Some(l);
        self
    }

    pub fn c(mut self, c: SharedForward) -> Self {
        self.c = Some(c);
        self
    }

    pub fn d(mut self, d: SharedForward) -> Self {
        self.d = Some(d);
        self
    }

    /// Dual dimension when neither `B` nor `L` fixes it.
    pub fn dual_dim(mut self, n: usize) -> Self {
        self.dual_dim = Some(n);
        self
    }

    pub fn build(self) -> Result<ProblemSpec> {
        let n = self.a.dim();
        let mut dual = self.dual_dim;
        let mut fix_dual = |m: usize, what: &str| -> Result<()> {
            match dual {
                Some(k) if k != m => Err(Error::contract(format!(
                    "{what} has dual dimension {m}, expected {k}"
                ))),
                _ => {
                    dual = Some(m);
                    Ok(())
                }
            }
        };
        if let Some(l) = &self.l {
            if l.in_dim() != n {
                return Err(Error::DimensionMismatch {
                    context: "L input vs primal",
                    expected: n,
                    found: l.in_dim(),
                });
            }
            fix_dual(l.out_dim(), "L")?;
        }
        if let Some(b) = &self.b {
            fix_dual(b.dim(), "B")?;
            if b.rho() != 0.0 {
                return Err(Error::contract("B must be maximally monotone (rho = 0)"));
            }
        }
        if let Some(c) = &self.c {
            if c.dim() != n {
                return Err(Error::DimensionMismatch {
                    context: "C vs primal",
                    expected: n,
                    found: c.dim(),
                });
            }
            if !(c.lipschitz() > 0.0 && c.lipschitz().is_finite()) {
                return Err(Error::contract("C needs a positive finite Lipschitz constant"));
            }
        }
        if let Some(d) = &self.d {
            if d.dim() != n {
                return Err(Error::DimensionMismatch {
                    context: "D vs primal",
                    expected: n,
                    found: d.dim(),
                });
            }
            if d.kind() != ForwardKind::Cocoercive {
                return Err(Error::contract("D must be declared cocoercive"));
            }
            if !(d.constant() > 0.0 && d.constant().is_finite()) {
                return Err(Error::contract("D needs a positive finite cocoercivity constant"));
            }
        }
        Ok(ProblemSpec {
            a: self.a,
            b: self.b,
            l: self.l,
            c: self.c,
            d: self.d,
            dual_dim: dual.unwrap_or(0),
        })
    }
}

impl ProblemSpec {
    pub fn builder(a: SharedResolvent) -> ProblemBuilder {
        ProblemBuilder {
            a,
            b: None,
            l: None,
            c: None,
            d: None,
            dual_dim: None,
        }
    }

    pub fn a(&self) -> &dyn ResolventOp {
        self.a.as_ref()
    }
    pub fn b(&self) -> Option<&dyn ResolventOp> {
        self.b.as_deref()
    }
    pub fn l(&self) -> Option<&dyn LinearMap> {
        self.l.as_deref()
    }
    pub fn c(&self) -> Option<&SharedForward> {
        self.c.as_ref()
    }
    pub fn d(&self) -> Option<&SharedForward> {
        self.d.as_ref()
    }

    pub fn primal_dim(&self) -> usize {
        self.a.dim()
    }
    pub fn dual_dim(&self) -> usize {
        self.dual_dim
    }

    pub fn rho(&self) -> f64 {
        self.a.rho()
    }
    /// Lipschitz constant of `C`, `None` when `C = 0`.
    pub fn zeta(&self) -> Option<f64> {
        self.c.as_ref().map(|c| c.lipschitz())
    }
    /// Cocoercivity constant of `D`, `None` when `D = 0`.
    pub fn beta(&self) -> Option<f64> {
        self.d.as_ref().map(|d| d.constant())
    }
    /// Certified `‖L‖`, zero when `L = 0`.
    pub fn l_norm(&self) -> f64 {
        self.l.as_ref().map_or(0.0, |l| l.norm_bound())
    }

    pub fn constants(&self) -> StepConstants {
        StepConstants {
            rho: self.rho(),
            beta: self.beta(),
            zeta: self.zeta(),
            l_norm: self.l_norm(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub tau: f64,
    pub sigma: f64,
    pub epsilon: f64,
}

impl StepSizes {
    pub fn new(tau: f64, sigma: f64, epsilon: f64) -> Self {
        Self { tau, sigma, epsilon }
    }
}

/// The scalar data the step-size conditions depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConstants {
    pub rho: f64,
    pub beta: Option<f64>,
    pub zeta: Option<f64>,
    pub l_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepCondition {
    /// `τ > 0` and `σ > 0`.
    Positive,
    /// `τρ > -1`, so `J_{τA}` is single-valued.
    SingleValued,
    /// `ε ∈ ]0, 1[`.
    EpsilonRange,
    /// `τ <= 2βε`.
    CocoerciveStep,
    /// `τσ‖L‖² + τ²ζ² < 1 - ε`.
    Contraction,
    /// `τσ‖L‖² + τ²ζ² < 1`, used when `D = 0`.
    ContractionNoCocoercive,
}

impl StepCondition {
    pub fn formula(&self) -> &'static str {
        match self {
            StepCondition::Positive => "tau > 0 and sigma > 0",
            StepCondition::SingleValued => "tau*rho > -1",
            StepCondition::EpsilonRange => "0 < epsilon < 1",
            StepCondition::CocoerciveStep => "tau <= 2*beta*epsilon",
            StepCondition::Contraction => "tau*sigma*|L|^2 + tau^2*zeta^2 < 1 - epsilon",
            StepCondition::ContractionNoCocoercive => "tau*sigma*|L|^2 + tau^2*zeta^2 < 1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCheck {
    pub condition: StepCondition,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl StepCheck {
    /// Signed margin; positive when the condition holds with room to spare.
    pub fn slack(&self) -> f64 {
        match self.condition {
            StepCondition::Positive | StepCondition::SingleValued => self.lhs - self.rhs,
            // distance to the nearer end of ]0, 1[
            StepCondition::EpsilonRange => self.lhs.min(self.rhs - self.lhs),
            _ => self.rhs - self.lhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepVerdict {
    pub checks: Vec<StepCheck>,
}

impl StepVerdict {
    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn violations(&self) -> impl Iterator<Item = &StepCheck> {
        self.checks.iter().filter(|c| !c.holds)
    }

    pub fn first_violation(&self) -> Option<StepCondition> {
        self.violations().next().map(|c| c.condition)
    }
}

impl fmt::Display for StepVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let failed: Vec<_> = self.violations().map(|c| c.condition.formula()).collect();
        if failed.is_empty() {
            write!(f, "all step conditions hold")
        } else {
            write!(f, "violated: {}", failed.join("; "))
        }
    }
}

/// Checks step sizes against the convergence conditions.
///
/// The `ζ` term vanishes when `C = 0`. When `D = 0` the cocoercive step
/// condition is dropped and the contraction bound becomes `< 1`.
pub fn validate_steps(spec: &ProblemSpec, steps: &StepSizes) -> StepVerdict {
    validate_constants(&spec.constants(), steps)
}

pub fn validate_constants(k: &StepConstants, s: &StepSizes) -> StepVerdict {
    let mut checks = Vec::with_capacity(4);
    let positive = s.tau > 0.0 && s.sigma > 0.0 && s.tau.is_finite() && s.sigma.is_finite();
    checks.push(StepCheck {
        condition: StepCondition::Positive,
        lhs: s.tau.min(s.sigma),
        rhs: 0.0,
        holds: positive,
    });
    let tr = s.tau * k.rho;
    checks.push(StepCheck {
        condition: StepCondition::SingleValued,
        lhs: tr,
        rhs: -1.0,
        holds: tr > -1.0,
    });

    let l2 = k.l_norm * k.l_norm;
    let zeta_term = k.zeta.map_or(0.0, |z| s.tau * s.tau * z * z);
    let lhs = s.tau * s.sigma * l2 + zeta_term;
    match k.beta {
        Some(beta) => {
            checks.push(StepCheck {
                condition: StepCondition::EpsilonRange,
                lhs: s.epsilon,
                rhs: 1.0,
                holds: s.epsilon > 0.0 && s.epsilon < 1.0,
            });
            // Written as τ/(2β) <= ε so that ε = τ/(2β) is accepted exactly.
            let ratio = s.tau / (2.0 * beta);
            checks.push(StepCheck {
                condition: StepCondition::CocoerciveStep,
                lhs: ratio,
                rhs: s.epsilon,
                holds: ratio <= s.epsilon,
            });
            let rhs = 1.0 - s.epsilon;
            checks.push(StepCheck {
                condition: StepCondition::Contraction,
                lhs,
                rhs,
                holds: lhs < rhs,
            });
        }
        None => checks.push(StepCheck {
            condition: StepCondition::ContractionNoCocoercive,
            lhs,
            rhs: 1.0,
            holds: lhs < 1.0,
        }),
    }
    StepVerdict { checks }
}

/// Supremum of admissible steps for the forward-backward-half-forward
/// reduction: `4β / (1 + sqrt(1 + 16β²ζ²))`. Tends to `2β` as `ζ -> 0`.
pub fn fbhf_step_bound(beta: f64, zeta: f64) -> f64 {
    4.0 * beta / (1.0 + (1.0 + 16.0 * beta * beta * zeta * zeta).sqrt())
}

/// The `ε` that turns the general conditions into the Condat-Vũ bound
/// `στ‖L‖² < 1 - τ/(2β)`.
pub fn epsilon_condat_vu(tau: f64, beta: f64) -> f64 {
    tau / (2.0 * beta)
}

/// Solves `2βζε = sqrt(1 - ε)` on `]0, 1[` by bisection. With this `ε`,
/// `τ <= 2βε` and `τ²ζ² < 1 - ε` meet exactly at [`fbhf_step_bound`].
pub fn epsilon_fbhf(beta: f64, zeta: f64) -> Result<f64> {
    if !(beta > 0.0 && zeta > 0.0) {
        return Err(Error::contract(format!(
            "epsilon_fbhf needs beta, zeta > 0 (got {beta}, {zeta})"
        )));
    }
    let f = |e: f64| 2.0 * beta * zeta * e - (1.0 - e).sqrt();
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// A conservative admissible step choice for a problem with no tuning:
/// half the FBHF supremum for `τ`, `ε = τ/(2β)`, and 90% of the remaining
/// contraction budget for `σ`.
pub fn suggest_steps(spec: &ProblemSpec) -> StepSizes {
    let k = spec.constants();
    let zeta = k.zeta.unwrap_or(0.0);
    let l2 = k.l_norm * k.l_norm;
    let tau = match k.beta {
        Some(beta) => 0.5 * fbhf_step_bound(beta, zeta),
        None if zeta > 0.0 => 0.5 / zeta,
        None if l2 > 0.0 => 1.0 / k.l_norm,
        None => 1.0,
    };
    let tau = if k.rho < 0.0 { tau.min(0.5 / -k.rho) } else { tau };
    let epsilon = k.beta.map_or(0.0, |b| epsilon_condat_vu(tau, b));
    let budget = 1.0 - epsilon - tau * tau * zeta * zeta;
    let sigma = if l2 > 0.0 { 0.9 * budget / (tau * l2) } else { 1.0 };
    StepSizes { tau, sigma, epsilon }
}
