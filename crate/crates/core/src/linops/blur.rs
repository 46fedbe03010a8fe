use ndarray::ArrayView1;

use super::{ImageGrid, LinearMap, Vector};
use crate::error::{Error, Result};

/// Normalized 1-D Gaussian sampled at integer offsets `-size/2..=size/2`.
///
/// The 2-D kernel is the outer product of this vector with itself, which
/// equals the 2-D sampled Gaussian normalized to unit sum.
pub fn gaussian_kernel_1d(size: usize, std: f64) -> Result<Vec<f64>> {
    if size % 2 == 0 {
        return Err(Error::contract(format!("blur size must be odd, got {size}")));
    }
    if !(std > 0.0 && std.is_finite()) {
        return Err(Error::contract(format!("blur std must be positive, got {std}")));
    }
    let half = (size / 2) as i64;
    let mut k: Vec<f64> = (-half..=half)
        .map(|i| (-((i * i) as f64) / (2.0 * std * std)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    Ok(k)
}

/// Periodic convolution with a separable Gaussian kernel.
///
/// The kernel is symmetric and nonnegative with unit mass, so the operator
/// is self-adjoint with `‖T‖ = 1` (attained on constants).
#[derive(Debug, Clone)]
pub struct GaussianBlur {
    rows: usize,
    cols: usize,
    kernel: Vec<f64>,
}

impl GaussianBlur {
    pub fn new(rows: usize, cols: usize, size: usize, std: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::contract("blur: image dimensions must be positive"));
        }
        Ok(Self {
            rows,
            cols,
            kernel: gaussian_kernel_1d(size, std)?,
        })
    }

    pub fn kernel_1d(&self) -> &[f64] {
        &self.kernel
    }

    fn convolve(&self, x: ArrayView1<f64>) -> Vector {
        let (rows, cols) = (self.rows, self.cols);
        let half = (self.kernel.len() / 2) as isize;
        let wrap = |i: isize, n: usize| i.rem_euclid(n as isize) as usize;

        let mut tmp = Vector::zeros(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let mut acc = 0.0;
                for (t, w) in self.kernel.iter().enumerate() {
                    let cc = wrap(c as isize + t as isize - half, cols);
                    acc += w * x[r * cols + cc];
                }
                tmp[r * cols + c] = acc;
            }
        }
        let mut out = Vector::zeros(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let mut acc = 0.0;
                for (t, w) in self.kernel.iter().enumerate() {
                    let rr = wrap(r as isize + t as isize - half, rows);
                    acc += w * tmp[rr * cols + c];
                }
                out[r * cols + c] = acc;
            }
        }
        out
    }
}

impl LinearMap for GaussianBlur {
    fn in_dim(&self) -> usize {
        self.rows * self.cols
    }
    fn out_dim(&self) -> usize {
        self.rows * self.cols
    }
    fn apply(&self, x: ArrayView1<f64>) -> Vector {
        assert_eq!(x.len(), self.in_dim(), "blur: input dimension");
        self.convolve(x)
    }
    fn adjoint(&self, u: ArrayView1<f64>) -> Vector {
        self.apply(u)
    }
    fn norm_bound(&self) -> f64 {
        1.0
    }
}

pub fn gaussian_blur(img: &ImageGrid, size: usize, std: f64) -> Result<ImageGrid> {
    let t = GaussianBlur::new(img.rows(), img.cols(), size, std)?;
    ImageGrid::new(img.rows(), img.cols(), t.apply(img.pixels().view()))
}
