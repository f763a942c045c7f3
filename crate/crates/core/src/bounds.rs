//! Sample-complexity and error-bound calculators. Absolute constants the
//! theory leaves unspecified default to 1 and can be overridden.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    /// Prefactor of the general measurement bound.
    pub c: f64,
    /// Prefactor of the sparse-case measurement bound.
    pub c_sparse: f64,
    /// Prefactor of the corollary error rates.
    pub c_cor: f64,
    /// Anisotropy constant (0 for Gaussian ensembles).
    pub kappa_sg: f64,
    /// Sub-Gaussian norm of the entry law.
    pub alpha: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        Self {
            c: 1.0,
            c_sparse: 1.0,
            c_cor: 1.0,
            kappa_sg: 0.0,
            alpha: 1.0,
        }
    }
}

impl BoundConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c_sparse > 0.0 && self.c_cor > 0.0 && self.alpha > 0.0) {
            return invalid_input("bound prefactors and alpha must be positive");
        }
        if !(self.kappa_sg >= 0.0) {
            return invalid_input("kappa_sg must be nonnegative");
        }
        Ok(())
    }
}

/// A bound value with a flag raised when the formula is evaluated outside
/// its intended regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub value: f64,
    pub degenerate: bool,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        invalid_input(format!("{name} must be positive, got {v}"))
    }
}

/// `C (2+δ)⁴ / (δ² ε⁴) · w²`, for `ε ∈ (0, 1)`.
pub fn min_measurements_general(w: f64, delta: f64, eps: f64, consts: &BoundConstants) -> Result<f64> {
    consts.validate()?;
    positive("w", w)?;
    positive("delta", delta)?;
    positive("eps", eps)?;
    if eps >= 1.0 {
        return invalid_input(format!("eps must lie in (0, 1), got {eps}"));
    }
    Ok(consts.c * (2.0 + delta).powi(4) / (delta * delta * eps.powi(4)) * w * w)
}

/// `C′ (2+δ)/ε · K log( N/(Kδ) · ((2+δ)/ε)^{3/2} )`.
pub fn min_measurements_sparse(
    k: usize,
    n: usize,
    delta: f64,
    eps: f64,
    consts: &BoundConstants,
) -> Result<BoundValue> {
    consts.validate()?;
    positive("delta", delta)?;
    positive("eps", eps)?;
    if k < 1 || k > n {
        return invalid_input(format!("need 1 <= K <= N, got K={k}, N={n}"));
    }
    let ratio = (2.0 + delta) / eps;
    let arg = n as f64 / (k as f64 * delta) * ratio.powf(1.5);
    Ok(BoundValue {
        value: consts.c_sparse * ratio * k as f64 * arg.ln(),
        degenerate: arg <= 1.0,
    })
}

/// `C (2+δ)/√δ · (w²/M)^{1/4}`.
pub fn error_bound_gaussian(m: f64, delta: f64, w: f64, consts: &BoundConstants) -> Result<f64> {
    consts.validate()?;
    if !(m >= 1.0) {
        return invalid_input("M must be at least 1");
    }
    positive("delta", delta)?;
    positive("w", w)?;
    Ok(consts.c_cor * (2.0 + delta) / delta.sqrt() * (w * w / m).powf(0.25))
}

/// Gaussian rate plus the `κ_sg λ` floor of non-Gaussian ensembles.
pub fn error_bound_subgaussian(
    m: f64,
    delta: f64,
    w: f64,
    lambda: f64,
    consts: &BoundConstants,
) -> Result<f64> {
    positive("lambda", lambda)?;
    Ok(error_bound_gaussian(m, delta, w, consts)? + consts.kappa_sg * lambda)
}

/// `9√27 α³`.
pub fn kappa_sg_upper(alpha: f64) -> Result<f64> {
    positive("alpha", alpha)?;
    Ok(9.0 * 27f64.sqrt() * alpha.powi(3))
}

/// `ε + 2λ√K0`.
pub fn prop3_error(eps: f64, lambda: f64, k0: f64) -> Result<f64> {
    if !(eps >= 0.0 && lambda >= 0.0 && k0 >= 0.0) {
        return invalid_input("eps, lambda and K0 must be nonnegative");
    }
    Ok(eps + 2.0 * lambda * k0.sqrt())
}

/// Smallest admissible `K0 = (16 κ_sg)²`.
pub fn min_antisparse_level(kappa_sg: f64) -> f64 {
    (16.0 * kappa_sg).powi(2)
}
