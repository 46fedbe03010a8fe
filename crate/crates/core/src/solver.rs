//! The iteration driver: step-size validation, stopping, per-iteration
//! metrics and optional CSV streaming.

use std::io::Write;

use ndarray::ArrayView1;

use crate::error::{check_dim, Error, Result};
use crate::linops::{dist_sq, LinearMap, Vector};
use crate::method::{auto_method, ActivationCounts, IterState, MethodRegistry, SplittingMethod};
use crate::problem::{ProblemSpec, StepSizes};

/// Header of the streamed metrics file.
pub const METRICS_HEADER: &str = "iter,dx,du,rel_pd_err,gamma,objective";

/// Floor for the relative-error denominator `‖x_n‖² + ‖u_n‖²`.
pub const DENOMINATOR_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub max_iters: usize,
    /// Stop once the relative primal-dual error drops to this value.
    pub rel_pd_tol: f64,
}

impl StopRule {
    pub fn iterations(max_iters: usize) -> Self {
        Self {
            max_iters,
            rel_pd_tol: 0.0,
        }
    }
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            rel_pd_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxIters,
    ToleranceMet,
    DivergenceDetected,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::MaxIters => "max_iters",
            Termination::ToleranceMet => "tolerance_met",
            Termination::DivergenceDetected => "divergence_detected",
        }
    }
}

/// A known solution `(x*, u*)`, used only for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub x_star: Vector,
    pub u_star: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    /// `‖x_{n+1} - x_n‖`.
    pub dx: f64,
    /// `‖u_{n+1} - u_n‖`.
    pub du: f64,
    /// `sqrt((‖Δx‖² + ‖Δu‖²) / (‖x_n‖² + ‖u_n‖²))`.
    pub rel_pd_err: f64,
    /// `‖z_{n+1} - x_n‖²`.
    pub z_gap_sq: f64,
    pub gamma: Option<f64>,
    pub objective: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub method: &'static str,
    pub records: Vec<IterRecord>,
    pub termination: Termination,
    pub final_state: IterState,
    pub counts: ActivationCounts,
    pub initial_gamma: Option<f64>,
    pub initial_objective: Option<f64>,
}

impl RunReport {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn last(&self) -> Option<&IterRecord> {
        self.records.last()
    }
}

/// `Γ_n = ‖x_n - x‖² + (τ/σ)‖u_n - u‖² - 2τ<x_n - x, L*(u_n - u)>`.
pub fn lyapunov_gamma(
    steps: &StepSizes,
    x: ArrayView1<f64>,
    u: ArrayView1<f64>,
    oracle: &OracleSolution,
    l: Option<&dyn LinearMap>,
) -> f64 {
    let ex = &x - &oracle.x_star;
    let eu = &u - &oracle.u_star;
    let cross = l.map_or(0.0, |l| ex.dot(&l.adjoint(eu.view())));
    ex.dot(&ex) + steps.tau / steps.sigma * eu.dot(&eu) - 2.0 * steps.tau * cross
}

/// `(1 - στ‖L‖²) max(‖x_n - x‖², (τ/σ)‖u_n - u‖²)`, a lower bound on `Γ_n`.
pub fn lyapunov_lower_bound(
    steps: &StepSizes,
    l_norm: f64,
    x: ArrayView1<f64>,
    u: ArrayView1<f64>,
    oracle: &OracleSolution,
) -> f64 {
    let ex = dist_sq(x, oracle.x_star.view());
    let eu = steps.tau / steps.sigma * dist_sq(u, oracle.u_star.view());
    (1.0 - steps.sigma * steps.tau * l_norm * l_norm) * ex.max(eu)
}

type Objective<'a> = Box<dyn Fn(ArrayView1<f64>) -> f64 + 'a>;

/// Configures and executes one solver run.
pub struct Solver<'a> {
    spec: &'a ProblemSpec,
    steps: StepSizes,
    stop: StopRule,
    method: Option<&'a dyn SplittingMethod>,
    objective: Option<Objective<'a>>,
    oracle: Option<OracleSolution>,
    sink: Option<&'a mut dyn Write>,
    allow_invalid_steps: bool,
}

impl<'a> Solver<'a> {
    pub fn new(spec: &'a ProblemSpec, steps: StepSizes) -> Self {
        Self {
            spec,
            steps,
            stop: StopRule::default(),
            method: None,
            objective: None,
            oracle: None,
            sink: None,
            allow_invalid_steps: false,
        }
    }

    pub fn stop(mut self, stop: StopRule) -> Self {
        self.stop = stop;
        self
    }

    /// Forces a method instead of the zero-marker dispatch.
    pub fn method(mut self, method: &'a dyn SplittingMethod) -> Self {
        self.method = Some(method);
        self
    }

    pub fn objective(mut self, f: impl Fn(ArrayView1<f64>) -> f64 + 'a) -> Self {
        self.objective = Some(Box::new(f));
        self
    }

    pub fn oracle(mut self, oracle: OracleSolution) -> Self {
        self.oracle = Some(oracle);
        self
    }

    /// Streams one CSV row per iteration (header [`METRICS_HEADER`]).
    pub fn metrics_csv(mut self, sink: &'a mut dyn Write) -> Self {
        self.sink = Some(sink);
        self
    }

    /// Runs even when the step sizes fail validation.
    pub fn allow_invalid_steps(mut self, allow: bool) -> Self {
        self.allow_invalid_steps = allow;
        self
    }

    pub fn run(mut self, x0: Vector, u0: Vector) -> Result<RunReport> {
        let spec = self.spec;
        check_dim("initial primal point", spec.primal_dim(), x0.len())?;
        check_dim("initial dual point", spec.dual_dim(), u0.len())?;

        let registry;
        let method = match self.method {
            Some(m) => m,
            None => {
                registry = MethodRegistry::builtin();
                registry.get(auto_method(spec))?
            }
        };
        method.supports(spec)?;
        let verdict = method.validate(spec, &self.steps);
        if !verdict.is_valid() && !self.allow_invalid_steps {
            return Err(Error::InvalidSteps(verdict));
        }

        let gamma_at = |s: &IterState, oracle: &Option<OracleSolution>| {
            oracle
                .as_ref()
                .map(|o| lyapunov_gamma(&self.steps, s.x.view(), s.u.view(), o, spec.l()))
        };

        let mut state = IterState::new(x0, u0);
        let mut counts = ActivationCounts::default();
        let initial_gamma = gamma_at(&state, &self.oracle);
        let initial_objective = self.objective.as_ref().map(|f| f(state.x.view()));
        let mut records = Vec::with_capacity(self.stop.max_iters.min(1 << 16));

        if let Some(sink) = self.sink.as_mut() {
            writeln!(sink, "{METRICS_HEADER}").map_err(|e| Error::io("<metrics sink>", e))?;
        }

        let mut termination = Termination::MaxIters;
        for _ in 0..self.stop.max_iters {
            let (x_prev, u_prev) = (state.x.clone(), state.u.clone());
            match method.step(spec, &self.steps, &mut state, &mut counts) {
                Ok(()) => {}
                Err(Error::Divergence { .. }) => {
                    termination = Termination::DivergenceDetected;
                    break;
                }
                Err(e) => return Err(e),
            }
            let dx2 = dist_sq(state.x.view(), x_prev.view());
            let du2 = dist_sq(state.u.view(), u_prev.view());
            let denom = (x_prev.dot(&x_prev) + u_prev.dot(&u_prev)).max(DENOMINATOR_FLOOR);
            let record = IterRecord {
                iter: state.n,
                dx: dx2.sqrt(),
                du: du2.sqrt(),
                rel_pd_err: ((dx2 + du2) / denom).sqrt(),
                z_gap_sq: dist_sq(state.z.view(), x_prev.view()),
                gamma: gamma_at(&state, &self.oracle),
                objective: self.objective.as_ref().map(|f| f(state.x.view())),
            };
            if let Some(sink) = self.sink.as_mut() {
                write_row(*sink, &record).map_err(|e| Error::io("<metrics sink>", e))?;
            }
            records.push(record);
            if record.rel_pd_err <= self.stop.rel_pd_tol {
                termination = Termination::ToleranceMet;
                break;
            }
        }

        Ok(RunReport {
            method: method.name(),
            records,
            termination,
            final_state: state,
            counts,
            initial_gamma,
            initial_objective,
        })
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_row(w: &mut dyn Write, r: &IterRecord) -> std::io::Result<()> {
    writeln!(
        w,
        "{},{},{},{},{},{}",
        r.iter,
        r.dx,
        r.du,
        r.rel_pd_err,
        opt(r.gamma),
        opt(r.objective)
    )
}

/// Runs with the dispatch-selected method.
pub fn run(spec: &ProblemSpec, steps: StepSizes, x0: Vector, u0: Vector, stop: StopRule) -> Result<RunReport> {
    Solver::new(spec, steps).stop(stop).run(x0, u0)
}

/// `sqrt(‖x⁺ - x‖² + ‖u⁺ - u‖²)` after one step of `method` from `(x, u)`.
pub fn fixed_point_residual(
    method: &dyn SplittingMethod,
    spec: &ProblemSpec,
    steps: &StepSizes,
    x: &Vector,
    u: &Vector,
) -> Result<f64> {
    let start = IterState::new(x.clone(), u.clone());
    let next = crate::method::single_step(method, spec, steps, &start)?;
    Ok((dist_sq(next.x.view(), x.view()) + dist_sq(next.u.view(), u.view())).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::DenseMatrix;
    use crate::method::Fpdhf;
    use crate::ops::{FnForward, ForwardKind, L1Norm, ZeroOperator};
    use ndarray::{array, Array2};
    use std::sync::Arc;

    fn zero_problem() -> ProblemSpec {
        ProblemSpec::builder(Arc::new(ZeroOperator { dim: 3 }))
            .b(Arc::new(L1Norm::new(2, 1.0)))
            .l(Arc::new(crate::linops::ZeroMap { in_dim: 3, out_dim: 2 }))
            .build()
            .unwrap()
    }

    #[test]
    fn zero_problem_stops_at_first_iteration() {
        let spec = zero_problem();
        let r = run(&spec, StepSizes::new(0.5, 0.5, 0.0), Vector::zeros(3), Vector::zeros(2), StopRule::default()).unwrap();
        assert_eq!(r.termination, Termination::ToleranceMet);
        assert_eq!(r.iterations(), 1);
        assert_eq!(r.records[0].dx, 0.0);
        assert_eq!(r.records[0].du, 0.0);
    }

    #[test]
    fn invalid_steps_rejected_unless_overridden() {
        let spec = ProblemSpec::builder(Arc::new(ZeroOperator { dim: 1 }))
            .d(Arc::new(FnForward::new(1, ForwardKind::Cocoercive, 1.0, |x| x.to_owned())))
            .build()
            .unwrap();
        let bad = StepSizes::new(3.0, 1.0, 0.5);
        let err = run(&spec, bad, array![1.0], Vector::zeros(0), StopRule::iterations(3)).unwrap_err();
        assert!(matches!(err, Error::InvalidSteps(_)));
        let r = Solver::new(&spec, bad)
            .stop(StopRule::iterations(3))
            .allow_invalid_steps(true)
            .run(array![1.0], Vector::zeros(0))
            .unwrap();
        assert_eq!(r.iterations(), 3);
    }

    #[test]
    fn divergence_aborts_with_partial_report() {
        let spec = ProblemSpec::builder(Arc::new(ZeroOperator { dim: 1 }))
            .d(Arc::new(FnForward::new(1, ForwardKind::Cocoercive, 1.0, |x| x.mapv(|v| 1e200 * v))))
            .build()
            .unwrap();
        let r = Solver::new(&spec, StepSizes::new(1.0, 1.0, 0.6))
            .stop(StopRule::iterations(50))
            .run(array![1.0], Vector::zeros(0))
            .unwrap();
        assert_eq!(r.termination, Termination::DivergenceDetected);
        assert!(r.iterations() < 50);
    }

    #[test]
    fn gamma_without_linear_term() {
        let steps = StepSizes::new(0.4, 0.8, 0.5);
        let o = OracleSolution {
            x_star: array![1.0, 0.0],
            u_star: array![0.5],
        };
        let g = lyapunov_gamma(&steps, array![2.0, 1.0].view(), array![1.5].view(), &o, None);
        assert!((g - (2.0 + 0.5 * 1.0)).abs() < 1e-15);
        let l = DenseMatrix::new(array![[1.0, 2.0]]);
        let zero = lyapunov_gamma(&steps, o.x_star.view(), o.u_star.view(), &o, Some(&l));
        assert_eq!(zero, 0.0);
        // ex = (1, 1), eu = 1, L*eu = (1, 2): cross term 2τ·3 = 2.4
        let g = lyapunov_gamma(&steps, array![2.0, 1.0].view(), array![1.5].view(), &o, Some(&l));
        assert!((g - (2.5 - 2.4)).abs() < 1e-14);
    }

    #[test]
    fn csv_stream_has_header_and_rows() {
        let spec = ProblemSpec::builder(Arc::new(ZeroOperator { dim: 2 }))
            .b(Arc::new(L1Norm::new(2, 0.1)))
            .l(Arc::new(DenseMatrix::new(Array2::eye(2))))
            .d(Arc::new(FnForward::new(2, ForwardKind::Cocoercive, 1.0, |x| x.to_owned())))
            .build()
            .unwrap();
        let mut buf = Vec::new();
        let r = Solver::new(&spec, StepSizes::new(0.5, 0.5, 0.25))
            .stop(StopRule::iterations(4))
            .method(&Fpdhf)
            .objective(|x| x.dot(&x))
            .metrics_csv(&mut buf)
            .run(array![1.0, -1.0], Vector::zeros(2))
            .unwrap();
        assert_eq!(r.iterations(), 4);
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER);
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("1,"));
        assert!(lines[1].split(',').nth(4).unwrap().is_empty());
    }
}
