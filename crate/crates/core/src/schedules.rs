//! Time-dependent coefficients of the damped flow and of the polynomial
//! subfamily of Lagrangians.
//!
//! The damping exponent is
//!
//! ```text
//! xi(t) = r t^(1-alpha) / (1-alpha)   for 0 <= alpha < 1
//! xi(t) = r ln t                      for alpha = 1
//! ```
//!
//! so that `xi'(t) = r / t^alpha` in both branches. The Hamiltonian of the
//! damped flow has kinetic coefficient `k(t) = e^{-xi(t)}` and potential
//! coefficient `u(t) = e^{xi(t)}`.

use crate::{Error, Result};

/// Largest exponent we allow before `exp` leaves the f64 range.
const EXP_OVERFLOW_LIMIT: f64 = 700.0;

/// Parameters of the `(alpha, r)`-damped flow together with the start time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampedFlowParams {
    pub alpha: f64,
    pub r: f64,
    pub t0: f64,
}

impl DampedFlowParams {
    /// Validating constructor: `0 <= alpha <= 1`, `r > 0`, `t0 > 0`.
    pub fn new(alpha: f64, r: f64, t0: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be in [0, 1], got {alpha}"
            )));
        }
        if !(r > 0.0) {
            return Err(Error::InvalidArgument(format!("r must be positive, got {r}")));
        }
        if !(t0 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "t0 must be positive, got {t0}"
            )));
        }
        Ok(Self { alpha, r, t0 })
    }
}

/// Damping exponent `xi(t)` and its first three derivatives.
///
/// `order` 0 returns `xi(t)` itself; orders 1..=3 return
/// `r t^-alpha`, `-r alpha t^(-alpha-1)` and `r alpha (alpha+1) t^(-alpha-2)`.
/// The `alpha = 1` branch (`xi = r ln t`) satisfies the same derivative
/// formulas.
pub fn xi(params: &DampedFlowParams, t: f64, order: u8) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("t must be positive, got {t}")));
    }
    let (alpha, r) = (params.alpha, params.r);
    match order {
        0 => {
            if alpha == 1.0 {
                Ok(r * t.ln())
            } else {
                Ok(r * t.powf(1.0 - alpha) / (1.0 - alpha))
            }
        }
        1 => Ok(r * t.powf(-alpha)),
        2 => Ok(-r * alpha * t.powf(-alpha - 1.0)),
        3 => Ok(r * alpha * (alpha + 1.0) * t.powf(-alpha - 2.0)),
        _ => Err(Error::InvalidArgument(format!(
            "unsupported derivative order {order}"
        ))),
    }
}

/// Hamiltonian coefficients `(k, u) = (e^{-xi(t)}, e^{xi(t)})`.
///
/// Fails loudly when `e^{xi(t)}` would overflow instead of returning
/// infinity; the velocity-form stepper avoids the exponential entirely.
pub fn hamiltonian_coeffs(params: &DampedFlowParams, t: f64) -> Result<(f64, f64)> {
    let x = xi(params, t, 0)?;
    if x.abs() > EXP_OVERFLOW_LIMIT {
        return Err(Error::ExponentialOverflow(format!(
            "xi({t}) = {x} exceeds the representable exponent range"
        )));
    }
    Ok(((-x).exp(), x.exp()))
}

/// Parameters of the polynomial subfamily (Euclidean setting): exponent `p`
/// and scale `C`. `p = 2`, `C = 1/4` recovers the NAG flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BregmanPolyParams {
    pub p: f64,
    pub c: f64,
}

impl BregmanPolyParams {
    pub fn new(p: f64, c: f64) -> Result<Self> {
        if !(p >= 2.0) {
            return Err(Error::InvalidArgument(format!("p must be >= 2, got {p}")));
        }
        if !(c > 0.0) {
            return Err(Error::InvalidArgument(format!("C must be positive, got {c}")));
        }
        Ok(Self { p, c })
    }
}

/// Lagrangian coefficients of the polynomial subfamily:
/// `a(t) = t^(p+1)/p` and `b(t) = C p t^(2p-1)`, hence
/// `b/a = C p^2 t^(p-2)`.
pub fn bregman_coeffs(params: &BregmanPolyParams, t: f64) -> Result<(f64, f64)> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("t must be positive, got {t}")));
    }
    let (p, c) = (params.p, params.c);
    let a = t.powf(p + 1.0) / p;
    let b = c * p * t.powf(2.0 * p - 1.0);
    Ok((a, b))
}

/// Ideal-scaling functions of the polynomial subfamily:
/// `alpha(t) = ln p - ln t`, `beta(t) = p ln t + ln C`, `gamma(t) = p ln t`.
///
/// Returns `(e^{alpha(t)}, beta'(t), gamma'(t))`, the three quantities the
/// ideal scaling conditions relate.
pub fn ideal_scaling_terms(params: &BregmanPolyParams, t: f64) -> Result<(f64, f64, f64)> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("t must be positive, got {t}")));
    }
    let p = params.p;
    Ok((p / t, p / t, p / t))
}
