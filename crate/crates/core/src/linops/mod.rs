//! Matrix-free linear operators.
//!
//! Every operator carries its adjoint and a certified upper bound on its
//! operator norm. Step-size validation only ever consumes the certified
//! bound; [`power_iteration_norm`] is a diagnostic that gives a lower
//! estimate.

mod blur;
mod haar;
mod image;

use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use blur::{gaussian_blur, gaussian_kernel_1d, GaussianBlur};
pub use haar::{haar_dwt, haar_idwt, HaarWavelet};
pub use image::{
    discrete_divergence, discrete_gradient, gradient_norm_bound, DiscreteGradient, ImageGrid,
};

pub type Vector = Array1<f64>;

/// A bounded linear map `L: R^in_dim -> R^out_dim` together with `L*`.
pub trait LinearMap: Send + Sync {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn apply(&self, x: ArrayView1<f64>) -> Vector;
    fn adjoint(&self, u: ArrayView1<f64>) -> Vector;
    /// Certified upper bound on `‖L‖`.
    fn norm_bound(&self) -> f64;
}

pub type SharedMap = Arc<dyn LinearMap>;

pub fn norm(x: ArrayView1<f64>) -> f64 {
    x.dot(&x).sqrt()
}

pub fn dist_sq(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum()
}

#[derive(Debug, Clone, Copy)]
pub struct Identity {
    pub dim: usize,
}

impl LinearMap for Identity {
    fn in_dim(&self) -> usize {
        self.dim
    }
    fn out_dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: ArrayView1<f64>) -> Vector {
        assert_eq!(x.len(), self.dim, "identity: input dimension");
        x.to_owned()
    }
    fn adjoint(&self, u: ArrayView1<f64>) -> Vector {
        self.apply(u)
    }
    fn norm_bound(&self) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroMap {
    pub in_dim: usize,
    pub out_dim: usize,
}

impl LinearMap for ZeroMap {
    fn in_dim(&self) -> usize {
        self.in_dim
    }
    fn out_dim(&self) -> usize {
        self.out_dim
    }
    fn apply(&self, x: ArrayView1<f64>) -> Vector {
        assert_eq!(x.len(), self.in_dim, "zero map: input dimension");
        Vector::zeros(self.out_dim)
    }
    fn adjoint(&self, u: ArrayView1<f64>) -> Vector {
        assert_eq!(u.len(), self.out_dim, "zero map: adjoint input dimension");
        Vector::zeros(self.in_dim)
    }
    fn norm_bound(&self) -> f64 {
        0.0
    }
}

/// Dense matrix operator. The default norm bound is
/// `min(‖M‖_F, sqrt(‖M‖_1 ‖M‖_inf))`, both of which dominate the spectral norm.
#[derive(Debug, Clone)]
pub struct DenseMatrix {
    matrix: Array2<f64>,
    bound: f64,
}

impl DenseMatrix {
    pub fn new(matrix: Array2<f64>) -> Self {
        let frob = matrix.iter().map(|v| v * v).sum::<f64>().sqrt();
        let max_col = matrix
            .columns()
            .into_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let max_row = matrix
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let bound = frob.min((max_col * max_row).sqrt());
        Self { matrix, bound }
    }

    /// Overrides the norm bound with a caller-certified value.
    pub fn with_norm_bound(mut self, bound: f64) -> Self {
        self.bound = bound;
        self
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }
}

impl LinearMap for DenseMatrix {
    fn in_dim(&self) -> usize {
        self.matrix.ncols()
    }
    fn out_dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn apply(&self, x: ArrayView1<f64>) -> Vector {
        self.matrix.dot(&x)
    }
    fn adjoint(&self, u: ArrayView1<f64>) -> Vector {
        self.matrix.t().dot(&u)
    }
    fn norm_bound(&self) -> f64 {
        self.bound
    }
}

/// Direct sum `L_1 ⊕ L_2 ⊕ ...`, acting blockwise on concatenated vectors.
pub struct BlockDiagonal {
    blocks: Vec<SharedMap>,
}

impl BlockDiagonal {
    pub fn new(blocks: Vec<SharedMap>) -> Self {
        Self { blocks }
    }
}

impl LinearMap for BlockDiagonal {
    fn in_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.in_dim()).sum()
    }
    fn out_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.out_dim()).sum()
    }
    fn apply(&self, x: ArrayView1<f64>) -> Vector {
        assert_eq!(x.len(), self.in_dim(), "block diagonal: input dimension");
        let mut out = Vector::zeros(self.out_dim());
        let (mut i0, mut o0) = (0, 0);
        for b in &self.blocks {
            let (ni, no) = (b.in_dim(), b.out_dim());
            out.slice_mut(s![o0..o0 + no])
                .assign(&b.apply(x.slice(s![i0..i0 + ni])));
            i0 += ni;
            o0 += no;
        }
        out
    }
    fn adjoint(&self, u: ArrayView1<f64>) -> Vector {
        assert_eq!(u.len(), self.out_dim(), "block diagonal: adjoint dimension");
        let mut out = Vector::zeros(self.in_dim());
        let (mut i0, mut o0) = (0, 0);
        for b in &self.blocks {
            let (ni, no) = (b.in_dim(), b.out_dim());
            out.slice_mut(s![i0..i0 + ni])
                .assign(&b.adjoint(u.slice(s![o0..o0 + no])));
            i0 += ni;
            o0 += no;
        }
        out
    }
    fn norm_bound(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.norm_bound())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn seeded_normal(dim: usize, rng: &mut ChaCha8Rng) -> Vector {
    Vector::from_shape_fn(dim, |_| StandardNormal.sample(rng))
}

/// Estimates `‖L‖` by power iteration on `L*L` from a seeded random start.
///
/// The returned value is the largest `‖L v‖` seen over unit iterates `v`,
/// so it never exceeds the true norm. Returns 0 for a zero map.
pub fn power_iteration_norm(map: &dyn LinearMap, iters: usize, seed: u64) -> f64 {
    let n = map.in_dim();
    if n == 0 || iters == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = seeded_normal(n, &mut rng);
    let vn = norm(v.view());
    if vn == 0.0 {
        return 0.0;
    }
    v /= vn;
    let mut best = 0.0_f64;
    for _ in 0..iters {
        let w = map.apply(v.view());
        best = best.max(norm(w.view()));
        let g = map.adjoint(w.view());
        let gn = norm(g.view());
        if gn == 0.0 || !gn.is_finite() {
            break;
        }
        v = g / gn;
    }
    best
}

/// Largest relative defect `|<Lx,u> - <x,L*u>|` over seeded Gaussian probes.
pub fn adjoint_defect(map: &dyn LinearMap, probes: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..probes {
        let x = seeded_normal(map.in_dim(), &mut rng);
        let u = seeded_normal(map.out_dim(), &mut rng);
        let lx = map.apply(x.view());
        let ltu = map.adjoint(u.view());
        let lhs = lx.dot(&u);
        let rhs = x.dot(&ltu);
        let scale = (norm(lx.view()) * norm(u.view()))
            .max(norm(x.view()) * norm(ltu.view()))
            .max(f64::MIN_POSITIVE);
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    worst
}
