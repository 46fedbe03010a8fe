use ndarray::ArrayView1;

use super::{LinearMap, Vector};
use crate::error::{Error, Result};

/// Grayscale image, row-major pixel layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    rows: usize,
    cols: usize,
    pixels: Vector,
}

impl ImageGrid {
    pub fn new(rows: usize, cols: usize, pixels: Vector) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::contract("image dimensions must be positive"));
        }
        if rows * cols != pixels.len() {
            return Err(Error::DimensionMismatch {
                context: "image pixels",
                expected: rows * cols,
                found: pixels.len(),
            });
        }
        Ok(Self { rows, cols, pixels })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::new(rows, cols, Vector::from_elem(rows * cols, value))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixels(&self) -> &Vector {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vector {
        self.pixels
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pixels[r * self.cols + c]
    }
}

/// Forward differences with replicate (Neumann) boundary, packed as
/// `(D1 x, D2 x)` where `D1` is horizontal and `D2` vertical.
pub fn discrete_gradient(img: &ImageGrid) -> Vector {
    gradient_into(img.rows, img.cols, img.pixels.view())
}

/// The adjoint `∇*` of [`discrete_gradient`] (the negative divergence in the
/// usual finite-difference convention).
pub fn discrete_divergence(field: ArrayView1<f64>, rows: usize, cols: usize) -> Result<Vector> {
    if field.len() % 2 != 0 {
        return Err(Error::contract(format!(
            "gradient field must have even length, got {}",
            field.len()
        )));
    }
    if field.len() != 2 * rows * cols {
        return Err(Error::DimensionMismatch {
            context: "gradient field",
            expected: 2 * rows * cols,
            found: field.len(),
        });
    }
    Ok(gradient_adjoint(rows, cols, field))
}

/// Certified bound `‖∇‖ ≤ √8` for forward differences on any grid.
pub fn gradient_norm_bound(_rows: usize, _cols: usize) -> f64 {
    8f64.sqrt()
}

fn gradient_into(rows: usize, cols: usize, x: ArrayView1<f64>) -> Vector {
    let n = rows * cols;
    let mut out = Vector::zeros(2 * n);
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                out[i] = x[i + 1] - x[i];
            }
            if r + 1 < rows {
                out[n + i] = x[i + cols] - x[i];
            }
        }
    }
    out
}

fn gradient_adjoint(rows: usize, cols: usize, y: ArrayView1<f64>) -> Vector {
    let n = rows * cols;
    let mut out = Vector::zeros(n);
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            let mut v = 0.0;
            if c + 1 < cols {
                v -= y[i];
            }
            if c > 0 {
                v += y[i - 1];
            }
            if r + 1 < rows {
                v -= y[n + i];
            }
            if r > 0 {
                v += y[n + i - cols];
            }
            out[i] = v;
        }
    }
    out
}

/// [`discrete_gradient`] as a [`LinearMap`] on row-major images.
#[derive(Debug, Clone, Copy)]
pub struct DiscreteGradient {
    pub rows: usize,
    pub cols: usize,
}

impl LinearMap for DiscreteGradient {
    fn in_dim(&self) -> usize {
        self.rows * self.cols
    }
    fn out_dim(&self) -> usize {
        2 * self.rows * self.cols
    }
    fn apply(&self, x: ArrayView1<f64>) -> Vector {
        assert_eq!(x.len(), self.in_dim(), "gradient: input dimension");
        gradient_into(self.rows, self.cols, x)
    }
    fn adjoint(&self, u: ArrayView1<f64>) -> Vector {
        assert_eq!(u.len(), self.out_dim(), "gradient: adjoint dimension");
        gradient_adjoint(self.rows, self.cols, u)
    }
    fn norm_bound(&self) -> f64 {
        gradient_norm_bound(self.rows, self.cols)
    }
}
