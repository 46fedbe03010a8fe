use ndarray::ArrayView1;

use crate::error::{Error, Result};
use crate::linops::Vector;

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::contract(format!("huber threshold must be positive, got {delta}")))
    }
}

#[inline]
pub(crate) fn huber_scalar(delta: f64, eta: f64) -> f64 {
    let a = eta.abs();
    if a > delta {
        a - delta / 2.0
    } else {
        eta * eta / (2.0 * delta)
    }
}

#[inline]
pub(crate) fn huber_scalar_grad(delta: f64, eta: f64) -> f64 {
    if eta.abs() <= delta {
        eta / delta
    } else {
        eta.signum()
    }
}

/// `H_δ(x) = Σ h_δ(x_i)`, quadratic on `[-δ, δ]` and affine outside.
pub fn huber_value(delta: f64, x: ArrayView1<f64>) -> Result<f64> {
    check_delta(delta)?;
    Ok(x.iter().map(|&v| huber_scalar(delta, v)).sum())
}

/// `∇H_δ`, which is `1/δ`-Lipschitz.
pub fn huber_gradient(delta: f64, x: ArrayView1<f64>) -> Result<Vector> {
    check_delta(delta)?;
    Ok(x.mapv(|v| huber_scalar_grad(delta, v)))
}
