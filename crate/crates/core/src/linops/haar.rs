//! Orthonormal 2-D Haar transform in the Mallat layout: after each level the
//! approximation band occupies the top-left quadrant of the working region.

use std::f64::consts::FRAC_1_SQRT_2;

use ndarray::ArrayView1;

use super::{ImageGrid, LinearMap, Vector};
use crate::error::{Error, Result};

fn check_divisible(rows: usize, cols: usize, levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(Error::contract("haar: levels must be positive"));
    }
    let block = 1usize
        .checked_shl(levels as u32)
        .ok_or_else(|| Error::contract("haar: too many levels"))?;
    if rows == 0 || cols == 0 || rows % block != 0 || cols % block != 0 {
        return Err(Error::contract(format!(
            "haar: {rows}x{cols} not divisible by 2^{levels}"
        )));
    }
    Ok(())
}

/// One analysis pass on `len` samples read with stride `stride` from `start`.
fn analyze_line(buf: &mut [f64], tmp: &mut [f64], start: usize, stride: usize, len: usize) {
    let half = len / 2;
    for k in 0..half {
        let a = buf[start + 2 * k * stride];
        let b = buf[start + (2 * k + 1) * stride];
        tmp[k] = (a + b) * FRAC_1_SQRT_2;
        tmp[half + k] = (a - b) * FRAC_1_SQRT_2;
    }
    for k in 0..len {
        buf[start + k * stride] = tmp[k];
    }
}

fn synthesize_line(buf: &mut [f64], tmp: &mut [f64], start: usize, stride: usize, len: usize) {
    let half = len / 2;
    for k in 0..half {
        let s = buf[start + k * stride];
        let d = buf[start + (half + k) * stride];
        tmp[2 * k] = (s + d) * FRAC_1_SQRT_2;
        tmp[2 * k + 1] = (s - d) * FRAC_1_SQRT_2;
    }
    for k in 0..len {
        buf[start + k * stride] = tmp[k];
    }
}

fn forward_in_place(buf: &mut [f64], rows: usize, cols: usize, levels: usize) {
    let mut tmp = vec![0.0; rows.max(cols)];
    let (mut r, mut c) = (rows, cols);
    for _ in 0..levels {
        for row in 0..r {
            analyze_line(buf, &mut tmp, row * cols, 1, c);
        }
        for col in 0..c {
            analyze_line(buf, &mut tmp, col, cols, r);
        }
        r /= 2;
        c /= 2;
    }
}

fn inverse_in_place(buf: &mut [f64], rows: usize, cols: usize, levels: usize) {
    let mut tmp = vec![0.0; rows.max(cols)];
    for level in (0..levels).rev() {
        let (r, c) = (rows >> level, cols >> level);
        for col in 0..c {
            synthesize_line(buf, &mut tmp, col, cols, r);
        }
        for row in 0..r {
            synthesize_line(buf, &mut tmp, row * cols, 1, c);
        }
    }
}

pub fn haar_dwt(img: &ImageGrid, levels: usize) -> Result<Vector> {
    check_divisible(img.rows(), img.cols(), levels)?;
    let mut out = img.pixels().clone();
    let buf = out.as_slice_mut().expect("owned vector is contiguous");
    forward_in_place(buf, img.rows(), img.cols(), levels);
    Ok(out)
}

pub fn haar_idwt(coeffs: ArrayView1<f64>, rows: usize, cols: usize, levels: usize) -> Result<ImageGrid> {
    check_divisible(rows, cols, levels)?;
    if coeffs.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            context: "haar coefficients",
            expected: rows * cols,
            found: coeffs.len(),
        });
    }
    let mut out = coeffs.to_owned();
    let buf = out.as_slice_mut().expect("owned vector is contiguous");
    inverse_in_place(buf, rows, cols, levels);
    ImageGrid::new(rows, cols, out)
}

/// The Haar analysis operator `W` as a [`LinearMap`]; `W* = W⁻¹`.
#[derive(Debug, Clone, Copy)]
pub struct HaarWavelet {
    rows: usize,
    cols: usize,
    levels: usize,
}

impl HaarWavelet {
    pub fn new(rows: usize, cols: usize, levels: usize) -> Result<Self> {
        check_divisible(rows, cols, levels)?;
        Ok(Self { rows, cols, levels })
    }
}

impl LinearMap for HaarWavelet {
    fn in_dim(&self) -> usize {
        self.rows * self.cols
    }
    fn out_dim(&self) -> usize {
        self.rows * self.cols
    }
    fn apply(&self, x: ArrayView1<f64>) -> Vector {
        assert_eq!(x.len(), self.in_dim(), "haar: input dimension");
        let mut out = x.to_owned();
        forward_in_place(out.as_slice_mut().unwrap(), self.rows, self.cols, self.levels);
        out
    }
    fn adjoint(&self, u: ArrayView1<f64>) -> Vector {
        assert_eq!(u.len(), self.out_dim(), "haar: adjoint dimension");
        let mut out = u.to_owned();
        inverse_in_place(out.as_slice_mut().unwrap(), self.rows, self.cols, self.levels);
        out
    }
    fn norm_bound(&self) -> f64 {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{adjoint_defect, norm, seeded_normal};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_two_by_two() {
        let img = ImageGrid::filled(2, 2, 1.5).unwrap();
        let w = haar_dwt(&img, 1).unwrap();
        assert!((w[0] - 3.0).abs() < 1e-15);
        assert!(w.iter().skip(1).all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn isometry_and_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (n, levels) in [(32, 3), (64, 3), (16, 4)] {
            let x = seeded_normal(n * n, &mut rng);
            let img = ImageGrid::new(n, n, x.clone()).unwrap();
            let w = haar_dwt(&img, levels).unwrap();
            let nx = norm(x.view());
            assert!((norm(w.view()) - nx).abs() <= 1e-12 * nx);
            let back = haar_idwt(w.view(), n, n, levels).unwrap();
            let err = (back.pixels() - &x).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            assert!(err < 1e-12, "{err}");
        }
    }

    #[test]
    fn rectangular_adjoint() {
        let w = HaarWavelet::new(16, 8, 3).unwrap();
        assert!(adjoint_defect(&w, 50, 1) < 1e-12);
    }

    #[test]
    fn unit_coefficient_gives_unit_image() {
        for k in [0, 5, 63] {
            let mut e = Vector::zeros(64);
            e[k] = 1.0;
            let img = haar_idwt(e.view(), 8, 8, 3).unwrap();
            assert!((norm(img.pixels().view()) - 1.0).abs() < 1e-14);
        }
        let zero = haar_idwt(Vector::zeros(64).view(), 8, 8, 3).unwrap();
        assert!(zero.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_indivisible() {
        let img = ImageGrid::filled(12, 12, 0.0).unwrap();
        assert!(matches!(haar_dwt(&img, 3), Err(Error::Contract(_))));
        assert!(haar_dwt(&img, 2).is_ok());
        assert!(HaarWavelet::new(8, 8, 0).is_err());
    }
}
