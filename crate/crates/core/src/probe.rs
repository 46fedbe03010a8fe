//! Seeded random probes for declared operator constants.
//!
//! These are diagnostics: solvers never call them on their own. Each probe
//! draws Gaussian pairs `(x, y)` scaled by `scale`.

use ndarray::ArrayView1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linops::{dist_sq, seeded_normal, Vector};
use crate::ops::{ForwardKind, ForwardOp, ResolventOp};

/// Relative slack granted before a probe counts as a violation.
pub const PROBE_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeReport {
    pub probes: usize,
    pub violations: usize,
    /// Largest observed ratio of the tested quantity to its declared bound.
    pub worst_ratio: f64,
}

impl ProbeReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn pairs(dim: usize, probes: usize, seed: u64, scale: f64) -> impl Iterator<Item = (Vector, Vector)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..probes).map(move |_| {
        let x = seeded_normal(dim, &mut rng) * scale;
        let y = seeded_normal(dim, &mut rng) * scale;
        (x, y)
    })
}

/// Checks the declared Lipschitz (`‖Tx-Ty‖ <= ζ‖x-y‖`) or cocoercive
/// (`<x-y, Tx-Ty> >= β‖Tx-Ty‖²`) constant of `op`.
pub fn probe_forward(op: &dyn ForwardOp, probes: usize, seed: u64, scale: f64) -> ProbeReport {
    let c = op.constant();
    let mut report = ProbeReport {
        probes,
        violations: 0,
        worst_ratio: 0.0,
    };
    for (x, y) in pairs(op.dim(), probes, seed, scale) {
        let tx = op.apply(x.view());
        let ty = op.apply(y.view());
        let dt = &tx - &ty;
        let dxy = &x - &y;
        let (value, bound) = match op.kind() {
            ForwardKind::Lipschitz => (dt.dot(&dt).sqrt(), c * dxy.dot(&dxy).sqrt()),
            // β‖Tx-Ty‖² <= <x-y, Tx-Ty>
            ForwardKind::Cocoercive => (c * dt.dot(&dt), dxy.dot(&dt)),
        };
        if value > bound + PROBE_SLACK * bound.abs().max(value.abs()) {
            report.violations += 1;
        }
        if bound > 0.0 {
            report.worst_ratio = report.worst_ratio.max(value / bound);
        }
    }
    report
}

/// Smallest `<Tx-Ty, x-y> / ‖x-y‖²` over the probes; nonnegative for a
/// monotone map.
pub fn probe_monotone(apply: impl Fn(ArrayView1<f64>) -> Vector, dim: usize, probes: usize, seed: u64, scale: f64) -> f64 {
    let mut worst = f64::INFINITY;
    for (x, y) in pairs(dim, probes, seed, scale) {
        let d = dist_sq(x.view(), y.view());
        if d == 0.0 {
            continue;
        }
        let inner = (&apply(x.view()) - &apply(y.view())).dot(&(&x - &y));
        worst = worst.min(inner / d);
    }
    worst
}

/// Checks `‖J x - J y‖ <= ‖x - y‖` for a resolvent with `ρ >= 0`.
pub fn probe_nonexpansive(op: &dyn ResolventOp, tau: f64, probes: usize, seed: u64, scale: f64) -> ProbeReport {
    let mut report = ProbeReport {
        probes,
        violations: 0,
        worst_ratio: 0.0,
    };
    for (x, y) in pairs(op.dim(), probes, seed, scale) {
        let d_out = dist_sq(op.resolve(tau, x.view()).view(), op.resolve(tau, y.view()).view()).sqrt();
        let d_in = dist_sq(x.view(), y.view()).sqrt();
        if d_out > d_in * (1.0 + PROBE_SLACK) {
            report.violations += 1;
        }
        if d_in > 0.0 {
            report.worst_ratio = report.worst_ratio.max(d_out / d_in);
        }
    }
    report
}
