//! Shared fixtures for the integration tests: seeded random problems and an
//! oracle solver that shares no code with the library.

#![allow(dead_code)]

use std::sync::Arc;

use fpdhf::linops::DenseMatrix;
use fpdhf::ops::{BoxIndicator, L1Norm, LinearForward, QuadraticDataGradient};
use fpdhf::{ProblemSpec, Vector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

pub fn gaussian_vec(n: usize, rng: &mut ChaCha8Rng) -> Vector {
    Vector::from_shape_fn(n, |_| rng.sample(StandardNormal))
}

/// `G - Gᵀ`, scaled.
pub fn skew(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let g = gaussian(n, n, rng);
    (&g - &g.t()) * scale
}

pub fn max_abs_diff(a: &Vector, b: &Vector) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

fn rows_of(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

/// The test problem
///
/// ```text
/// min_{x ∈ [lo, hi]^n}  λ‖Lx‖₁ + ½‖Mx - z‖² + (skew coupling S)
/// ```
///
/// i.e. `0 ∈ N_box x + Lᵀ∂(λ‖·‖₁)(Lx) + Sx + Mᵀ(Mx - z)` with `S` skew, so
/// `C = S` is Lipschitz and not cocoercive.
#[derive(Clone)]
pub struct KktProblem {
    pub n: usize,
    pub m: usize,
    pub s: Array2<f64>,
    pub data: Array2<f64>,
    pub z: Vector,
    pub l: Array2<f64>,
    pub lambda: f64,
    pub lo: f64,
    pub hi: f64,
}

impl KktProblem {
    pub fn random(n: usize, m: usize, seed: u64) -> Self {
        let mut r = rng(seed);
        let scale = 1.0 / (n as f64).sqrt();
        let data = Array2::eye(n) * 2.0 + gaussian(n, n, &mut r) * (0.3 * scale);
        let target = gaussian_vec(n, &mut r) * 1.5;
        let z = data.dot(&target);
        Self {
            n,
            m,
            s: skew(n, 0.5 * scale, &mut r),
            data,
            z,
            l: gaussian(m, n, &mut r) * scale,
            lambda: 0.5,
            lo: -1.0,
            hi: 1.0,
        }
    }

    pub fn spec(&self) -> ProblemSpec {
        let skew_map = Arc::new(DenseMatrix::new(self.s.clone()));
        let data = Arc::new(DenseMatrix::new(self.data.clone()));
        ProblemSpec::builder(Arc::new(BoxIndicator::new(self.n, self.lo, self.hi).unwrap()))
            .b(Arc::new(L1Norm::new(self.m, self.lambda)))
            .l(Arc::new(DenseMatrix::new(self.l.clone())))
            .c(Arc::new(LinearForward::lipschitz(skew_map).unwrap()))
            .d(Arc::new(QuadraticDataGradient::new(data, self.z.clone()).unwrap()))
            .build()
            .unwrap()
    }
}

fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

fn matvec_t(a: &[Vec<f64>], y: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for (row, &yi) in a.iter().zip(y) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v * yi;
        }
    }
    out
}

fn frobenius(a: &[Vec<f64>]) -> f64 {
    a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

/// Tseng forward-backward-forward on the monotone KKT system in `(x, u)`:
///
/// ```text
/// F(x, u) = (Sx + Mᵀ(Mx - z) + Lᵀu, -Lx),   P = (proj_box, clamp_[-λ, λ])
/// ```
///
/// Written on plain vectors so it shares nothing with the library.
pub struct TsengOracle {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

struct Kkt {
    s: Vec<Vec<f64>>,
    mt: Vec<Vec<f64>>,
    l: Vec<Vec<f64>>,
    z: Vec<f64>,
    n: usize,
    lambda: f64,
    lo: f64,
    hi: f64,
}

impl Kkt {
    fn field(&self, x: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let sx = matvec(&self.s, x);
        let r: Vec<f64> = matvec(&self.mt, x).iter().zip(&self.z).map(|(a, b)| a - b).collect();
        let grad = matvec_t(&self.mt, &r, self.n);
        let ltu = matvec_t(&self.l, u, self.n);
        let fx = (0..self.n).map(|i| sx[i] + grad[i] + ltu[i]).collect();
        let fu = matvec(&self.l, x).iter().map(|v| -v).collect();
        (fx, fu)
    }

    fn project(&self, x: &mut [f64], u: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = v.clamp(self.lo, self.hi));
        u.iter_mut().for_each(|v| *v = v.clamp(-self.lambda, self.lambda));
    }

    /// Natural residual `‖w - P(w - F(w))‖`; zero exactly at solutions.
    fn residual(&self, x: &[f64], u: &[f64]) -> f64 {
        let (fx, fu) = self.field(x, u);
        let mut px: Vec<f64> = x.iter().zip(&fx).map(|(a, b)| a - b).collect();
        let mut pu: Vec<f64> = u.iter().zip(&fu).map(|(a, b)| a - b).collect();
        self.project(&mut px, &mut pu);
        let dx: f64 = x.iter().zip(&px).map(|(a, b)| (a - b) * (a - b)).sum();
        let du: f64 = u.iter().zip(&pu).map(|(a, b)| (a - b) * (a - b)).sum();
        (dx + du).sqrt()
    }
}

fn kkt(p: &KktProblem) -> Kkt {
    Kkt {
        s: rows_of(&p.s),
        mt: rows_of(&p.data),
        l: rows_of(&p.l),
        z: p.z.to_vec(),
        n: p.n,
        lambda: p.lambda,
        lo: p.lo,
        hi: p.hi,
    }
}

pub fn kkt_residual(p: &KktProblem, x: &Vector, u: &Vector) -> f64 {
    kkt(p).residual(x.as_slice().unwrap(), u.as_slice().unwrap())
}

pub fn tseng_oracle(p: &KktProblem, tol: f64, max_iters: usize) -> TsengOracle {
    let k = kkt(p);
    let lip = frobenius(&k.s) + frobenius(&k.mt).powi(2) + frobenius(&k.l);
    let gamma = 0.9 / lip;
    let mut x = vec![0.0; p.n];
    let mut u = vec![0.0; p.m];
    let mut residual = k.residual(&x, &u);
    let mut it = 0;
    while it < max_iters && residual > tol {
        let (fx, fu) = k.field(&x, &u);
        let mut yx: Vec<f64> = x.iter().zip(&fx).map(|(a, b)| a - gamma * b).collect();
        let mut yu: Vec<f64> = u.iter().zip(&fu).map(|(a, b)| a - gamma * b).collect();
        k.project(&mut yx, &mut yu);
        let (gx, gu) = k.field(&yx, &yu);
        for i in 0..p.n {
            x[i] = yx[i] - gamma * (gx[i] - fx[i]);
        }
        for i in 0..p.m {
            u[i] = yu[i] - gamma * (gu[i] - fu[i]);
        }
        it += 1;
        if it % 64 == 0 {
            residual = k.residual(&x, &u);
        }
    }
    residual = k.residual(&x, &u);
    TsengOracle {
        x,
        u,
        residual,
        iterations: it,
    }
}
