
use ndarray::{s, ArrayView1};

use super::{ResolventOp, SharedResolvent};
use crate::error::{Error, Result};
use crate::linops::Vector;

/// Soft thresholding: `prox_{τλ‖·‖₁}(v)_i = sign(v_i) max(|v_i| - τλ, 0)`.
pub fn prox_l1(weight: f64, step: f64, v: ArrayView1<f64>) -> Vector {
    let t = weight * step;
    v.mapv(|x| x.signum() * (x.abs() - t).max(0.0))
}

/// Projection onto `[lo, hi]^n`.
pub fn prox_box(lo: f64, hi: f64, v: ArrayView1<f64>) -> Result<Vector> {
    if lo > hi || lo.is_nan() || hi.is_nan() {
        return Err(Error::contract(format!("box bounds out of order: [{lo}, {hi}]")));
    }
    Ok(v.mapv(|x| x.clamp(lo, hi)))
}

/// Euclidean projection onto the probability simplex `{x >= 0, Σx = 1}`.
pub fn project_simplex(v: ArrayView1<f64>) -> Vector {
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        cumsum += s;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    v.mapv(|x| (x - theta).max(0.0))
}

/// `A = 0`; its resolvent is the identity.
#[derive(Debug, Clone, Copy)]
pub struct ZeroOperator {
    pub dim: usize,
}

impl ResolventOp for ZeroOperator {
    fn dim(&self) -> usize {
        self.dim
    }
    fn resolve(&self, _tau: f64, x: ArrayView1<f64>) -> Vector {
        x.to_owned()
    }
    fn name(&self) -> &str {
        "zero"
    }
}

/// Normal cone of `[lo, hi]^n` (subdifferential of the box indicator).
#[derive(Debug, Clone, Copy)]
pub struct BoxIndicator {
    dim: usize,
    lo: f64,
    hi: f64,
}

impl BoxIndicator {
    pub fn new(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        if lo > hi || lo.is_nan() || hi.is_nan() {
            return Err(Error::contract(format!("box bounds out of order: [{lo}, {hi}]")));
        }
        Ok(Self { dim, lo, hi })
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

impl ResolventOp for BoxIndicator {
    fn dim(&self) -> usize {
        self.dim
    }
    fn resolve(&self, _tau: f64, x: ArrayView1<f64>) -> Vector {
        x.mapv(|v| v.clamp(self.lo, self.hi))
    }
    fn name(&self) -> &str {
        "box"
    }
}

/// `∂(λ‖·‖₁)`.
#[derive(Debug, Clone, Copy)]
pub struct L1Norm {
    dim: usize,
    weight: f64,
}

impl L1Norm {
    pub fn new(dim: usize, weight: f64) -> Self {
        Self { dim, weight }
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }
}

impl ResolventOp for L1Norm {
    fn dim(&self) -> usize {
        self.dim
    }
    fn resolve(&self, tau: f64, x: ArrayView1<f64>) -> Vector {
        prox_l1(self.weight, tau, x)
    }
    fn name(&self) -> &str {
        "l1"
    }
}

/// Normal cone of the probability simplex.
#[derive(Debug, Clone, Copy)]
pub struct SimplexIndicator {
    pub dim: usize,
}

impl ResolventOp for SimplexIndicator {
    fn dim(&self) -> usize {
        self.dim
    }
    fn resolve(&self, _tau: f64, x: ArrayView1<f64>) -> Vector {
        project_simplex(x)
    }
    fn name(&self) -> &str {
        "simplex"
    }
}

type ResolveFn = dyn Fn(f64, ArrayView1<f64>) -> Vector + Send + Sync;

/// Caller-supplied resolvent. This is the only route for `ρ < 0`.
pub struct FnResolvent {
    name: String,
    dim: usize,
    rho: f64,
    f: Box<ResolveFn>,
}

impl FnResolvent {
    pub fn new<F>(name: impl Into<String>, dim: usize, rho: f64, f: F) -> Self
    where
        F: Fn(f64, ArrayView1<f64>) -> Vector + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            rho,
            f: Box::new(f),
        }
    }
}

impl ResolventOp for FnResolvent {
    fn dim(&self) -> usize {
        self.dim
    }
    fn rho(&self) -> f64 {
        self.rho
    }
    fn resolve(&self, tau: f64, x: ArrayView1<f64>) -> Vector {
        (self.f)(tau, x)
    }
    fn name(&self) -> &str {
        &self.name
    }
}

/// `A = A_1 × A_2 × ...` on a product space; `J_{τA} = (J_{τA_i})_i`.
pub struct ProductResolvent {
    blocks: Vec<SharedResolvent>,
    dim: usize,
}

impl ProductResolvent {
    pub fn new(blocks: Vec<SharedResolvent>) -> Self {
        let dim = blocks.iter().map(|b| b.dim()).sum();
        Self { blocks, dim }
    }

    pub fn blocks(&self) -> &[SharedResolvent] {
        &self.blocks
    }
}

impl ResolventOp for ProductResolvent {
    fn dim(&self) -> usize {
        self.dim
    }
    fn rho(&self) -> f64 {
        if self.blocks.is_empty() {
            return 0.0;
        }
        self.blocks.iter().map(|b| b.rho()).fold(f64::INFINITY, f64::min)
    }
    fn resolve(&self, tau: f64, x: ArrayView1<f64>) -> Vector {
        let mut out = Vector::zeros(self.dim);
        let mut start = 0;
        for b in &self.blocks {
            let n = b.dim();
            out.slice_mut(s![start..start + n])
                .assign(&b.resolve(tau, x.slice(s![start..start + n])));
            start += n;
        }
        out
    }
    fn name(&self) -> &str {
        "product"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    /// Scalar brute-force minimizer: coarse grid, then golden-section refinement.
    fn scalar_argmin(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        let n = 2000;
        let h = (hi - lo) / n as f64;
        let mut best = lo;
        for k in 0..=n {
            let y = lo + k as f64 * h;
            if f(y) < f(best) {
                best = y;
            }
        }
        let (mut a, mut b) = ((best - h).max(lo), (best + h).min(hi));
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) <= f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn prox_l1_examples() {
        assert_eq!(prox_l1(1.0, 1.0, array![0.0, 0.0].view()), array![0.0, 0.0]);
        assert_eq!(prox_l1(2.0, 0.5, array![2.0, -0.5].view()), array![1.0, 0.0]);
        let v = array![1.5, -3.0, 0.25];
        assert_eq!(prox_l1(0.0, 2.0, v.view()), v);
    }

    #[test]
    fn prox_l1_matches_grid_search() {
        for &v in &[2.0, -0.5, 0.3, -7.25] {
            let got = prox_l1(1.0, 1.0, array![v].view())[0];
            let oracle = scalar_argmin(|y| y.abs() + 0.5 * (y - v) * (y - v), -10.0, 10.0);
            assert!((got - oracle).abs() < 1e-6, "{v}: {got} vs {oracle}");
        }
    }

    #[test]
    fn prox_box_examples() {
        let out = prox_box(0.0, 1.0, array![-3.0, 0.5, 2.0].view()).unwrap();
        assert_eq!(out, array![0.0, 0.5, 1.0]);
        assert!(prox_box(1.0, 0.0, array![0.0].view()).is_err());
        let inside = array![0.1, 0.9];
        assert_eq!(prox_box(0.0, 1.0, inside.view()).unwrap(), inside);
    }

    #[test]
    fn prox_box_matches_grid_search() {
        for &v in &[-3.0, 0.42, 1.7] {
            let got = prox_box(0.0, 1.0, array![v].view()).unwrap()[0];
            let oracle = scalar_argmin(|y| 0.5 * (y - v) * (y - v), 0.0, 1.0);
            assert!((got - oracle).abs() < 1e-6);
        }
    }

    #[test]
    fn simplex_projection() {
        let p = project_simplex(array![0.2, 0.3, 0.5].view());
        assert!((p - array![0.2, 0.3, 0.5]).iter().all(|d| d.abs() < 1e-15));
        let q = project_simplex(array![5.0, 0.0, 0.0].view());
        assert_eq!(q, array![1.0, 0.0, 0.0]);
        let r = project_simplex(array![0.0, 0.0].view());
        assert!((r - array![0.5, 0.5]).iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn product_resolvent_concatenates() {
        let p = ProductResolvent::new(vec![
            std::sync::Arc::new(BoxIndicator::new(2, 0.0, 1.0).unwrap()),
            std::sync::Arc::new(L1Norm::new(1, 1.0)),
        ]);
        let out = p.resolve(0.5, array![2.0, -1.0, 3.0].view());
        assert_eq!(out, array![1.0, 0.0, 2.5]);
        assert_eq!(p.rho(), 0.0);
    }

    proptest! {
        #[test]
        fn box_projection_idempotent(v in prop::collection::vec(-10.0f64..10.0, 1..20)) {
            let v = Vector::from(v);
            let once = prox_box(-1.0, 2.0, v.view()).unwrap();
            let twice = prox_box(-1.0, 2.0, once.view()).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn resolvents_nonexpansive(
            x in prop::collection::vec(-5.0f64..5.0, 6),
            y in prop::collection::vec(-5.0f64..5.0, 6),
            tau in 0.01f64..10.0,
        ) {
            let (x, y) = (Vector::from(x), Vector::from(y));
            let ops: Vec<SharedResolvent> = vec![
                std::sync::Arc::new(L1Norm::new(6, 0.3)),
                std::sync::Arc::new(BoxIndicator::new(6, -1.0, 1.0).unwrap()),
                std::sync::Arc::new(SimplexIndicator { dim: 6 }),
            ];
            let d0 = (&x - &y).mapv(|v| v * v).sum().sqrt();
            for op in &ops {
                let d = (op.resolve(tau, x.view()) - op.resolve(tau, y.view()))
                    .mapv(|v| v * v).sum().sqrt();
                prop_assert!(d <= d0 + 1e-12);
            }
        }
    }
}
