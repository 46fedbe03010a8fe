//! Operators of a monotone inclusion.
//!
//! Set-valued operators enter only through their resolvents
//! ([`ResolventOp`]); single-valued operators are [`ForwardOp`]s with a
//! declared Lipschitz or cocoercivity constant.

mod forward;
mod huber;
mod resolvent;

use std::sync::Arc;

use ndarray::ArrayView1;

use crate::error::{check_dim, Error, Result};
use crate::linops::Vector;

pub use forward::{
    quadratic_data_gradient, FnForward, ForwardKind, ForwardOp, LinearForward, ProductForward,
    QuadraticDataGradient, WeightedHuberGradient,
};
pub use huber::{huber_gradient, huber_value};
pub use resolvent::{
    prox_box, prox_l1, project_simplex, BoxIndicator, FnResolvent, L1Norm, ProductResolvent,
    SimplexIndicator, ZeroOperator,
};

/// A maximally `ρ`-monotone operator `A`, exposed through `J_{τA} = (Id + τA)⁻¹`.
pub trait ResolventOp: Send + Sync {
    fn dim(&self) -> usize;

    /// Monotonicity modulus `ρ`; negative for weakly monotone operators.
    fn rho(&self) -> f64 {
        0.0
    }

    /// Computes `J_{τA}(x)`. Callers guarantee `τ > 0`, `τρ > -1` and the
    /// dimension; use [`resolvent`] for the checked form.
    fn resolve(&self, tau: f64, x: ArrayView1<f64>) -> Vector;

    fn name(&self) -> &str;
}

pub type SharedResolvent = Arc<dyn ResolventOp>;
pub type SharedForward = Arc<dyn ForwardOp>;

/// `J_{τA}(x)` with the single-valuedness condition `τρ > -1` enforced.
pub fn resolvent(op: &dyn ResolventOp, tau: f64, x: ArrayView1<f64>) -> Result<Vector> {
    if !(tau > 0.0) {
        return Err(Error::contract(format!("resolvent step must be positive, got {tau}")));
    }
    if tau * op.rho() <= -1.0 {
        return Err(Error::contract(format!(
            "resolvent of `{}` is not single-valued: tau*rho = {} <= -1",
            op.name(),
            tau * op.rho()
        )));
    }
    check_dim("resolvent input", op.dim(), x.len())?;
    Ok(op.resolve(tau, x))
}

/// `J_{σB⁻¹}(w) = w - σ J_{σ⁻¹B}(w/σ)`, the Moreau decomposition.
pub fn resolvent_of_inverse(b: &dyn ResolventOp, sigma: f64, w: ArrayView1<f64>) -> Result<Vector> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::contract(format!("sigma must be positive, got {sigma}")));
    }
    check_dim("dual resolvent input", b.dim(), w.len())?;
    Ok(inverse_resolve_unchecked(b, sigma, w))
}

pub(crate) fn inverse_resolve_unchecked(b: &dyn ResolventOp, sigma: f64, w: ArrayView1<f64>) -> Vector {
    let scaled = &w / sigma;
    let primal = b.resolve(1.0 / sigma, scaled.view());
    &w - &(primal * sigma)
}
