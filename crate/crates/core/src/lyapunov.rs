//! Lyapunov certificates, decrease thresholds, convergence-rate envelopes
//! and trajectory monitors for the damped flow.
//!
//! A certificate is the coefficient family
//!
//! ```text
//! L(t) = 1/2 ||A(t) x'(t) + B(t)(x(t) - x*)||^2
//!      + 1/2 C(t) ||x'(t)||^2 + D(t) (f(x(t)) - f*)
//! ```
//!
//! with `D = e^{beta xi}` and `A, B, C` determined by the conditions that
//! make `dL/dt <= 0` for `t >= T`, where `T` is the largest root of the
//! polynomial `P(t) = mu t^2 - (1-beta) beta r^2 t^{2(1-alpha)}
//! + (2-3beta) r alpha t^{1-alpha} + alpha (alpha+1)` (zero if `P` has no
//! root).
//!
//! Since `e^{beta xi}` overflows long before trajectories stop being
//! interesting, every monitor here works with `log L = beta xi + log(Lt)`
//! where `Lt` is the certificate value with the common `e^{beta xi}` factor
//! removed.

use std::io::Write;

use nalgebra::DVector;

use crate::integrators::ReferenceTrajectory;
use crate::problems::ObjectiveProblem;
use crate::{Error, Result};

/// Additive slack for log-scale monotonicity checks, sized well above the
/// per-sample error of the fourth-order reference solver.
pub const MONITOR_SLACK: f64 = 1e-8;

const EXP_OVERFLOW_LIMIT: f64 = 700.0;

/// Upper admissible bound on `beta` for the given damping regime.
pub fn beta_max(alpha: f64, r: f64) -> f64 {
    if alpha == 1.0 {
        (2.0 / 3.0f64).min((1.0 + r) / (2.0 * r))
    } else {
        0.5
    }
}

/// A Lyapunov certificate for the `(alpha, r)`-damped flow on a
/// `mu`-strongly convex objective; valid (nonincreasing) for
/// `t >= t_threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovCertificate {
    pub alpha: f64,
    pub r: f64,
    pub beta: f64,
    pub mu: f64,
    pub t_threshold: f64,
}

/// Validating constructor; enforces the admissibility bounds on `beta`
/// (and on `r` when `alpha = 0`) and computes the decrease threshold.
pub fn certificate(alpha: f64, r: f64, beta: f64, mu: f64) -> Result<LyapunovCertificate> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must be in [0, 1], got {alpha}")));
    }
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("r must be positive, got {r}")));
    }
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument(format!("mu must be positive, got {mu}")));
    }
    let bmax = beta_max(alpha, r);
    if !(beta > 0.0 && beta <= bmax) {
        return Err(Error::InadmissibleCertificate(format!(
            "beta = {beta} outside (0, {bmax}] for alpha = {alpha}, r = {r}"
        )));
    }
    if alpha == 0.0 {
        let r_cap = (mu / (beta * (1.0 - beta))).sqrt();
        // the boundary r = r_cap is admissible; tolerate its rounding error
        if r > r_cap * (1.0 + 1e-9) {
            return Err(Error::InadmissibleCertificate(format!(
                "alpha = 0 requires r <= sqrt(mu / (beta (1 - beta))) = {r_cap}, got {r}"
            )));
        }
    }
    let t_threshold = threshold_t(mu, alpha, r, beta)?;
    Ok(LyapunovCertificate { alpha, r, beta, mu, t_threshold })
}

/// The decrease polynomial
/// `P(t) = mu t^2 - (1-beta) beta r^2 t^{2(1-alpha)}
/// + (2-3beta) r alpha t^{1-alpha} + alpha (alpha+1)`.
pub fn poly_p(mu: f64, alpha: f64, r: f64, beta: f64, t: f64) -> f64 {
    let s = t.powf(1.0 - alpha);
    mu * t * t - (1.0 - beta) * beta * r * r * s * s
        + (2.0 - 3.0 * beta) * r * alpha * s
        + alpha * (alpha + 1.0)
}

/// Largest root of `P` found by a geometric scan plus bisection; `0` when
/// `P` is positive over the whole scan range.
fn largest_root_numeric(mu: f64, alpha: f64, r: f64, beta: f64) -> Result<f64> {
    // The mu t^2 term dominates eventually; this magnitude estimate for the
    // crossover gets a wide safety multiplier.
    let hint = if alpha > 0.0 { (r * r / mu).powf(1.0 / (2.0 * alpha)) } else { 1.0 };
    let lo = 1e-6f64;
    let hi = 1e6 * hint.max(1.0);
    let n = 4000usize;
    let ratio = (hi / lo).powf(1.0 / (n as f64 - 1.0));
    let grid: Vec<f64> = (0..n).map(|i| lo * ratio.powi(i as i32)).collect();
    let mut last_nonpos = None;
    for (i, &t) in grid.iter().enumerate() {
        if poly_p(mu, alpha, r, beta, t) <= 0.0 {
            last_nonpos = Some(i);
        }
    }
    let i = match last_nonpos {
        None => return Ok(0.0),
        Some(i) if i + 1 == n => {
            return Err(Error::RootScanExhausted(format!(
                "P still nonpositive at the scan limit t = {hi} (mu = {mu}, alpha = {alpha}, r = {r}, beta = {beta})"
            )));
        }
        Some(i) => i,
    };
    let (mut a, mut b) = (grid[i], grid[i + 1]);
    while (b - a) > 1e-12 * b {
        let mid = 0.5 * (a + b);
        if poly_p(mu, alpha, r, beta, mid) <= 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Decrease threshold `T(mu, alpha, r, beta)`: closed forms for the two
/// endpoint regimes, numeric largest root otherwise.
pub fn threshold_t(mu: f64, alpha: f64, r: f64, beta: f64) -> Result<f64> {
    if alpha == 0.0 {
        // P = (mu - (1-beta) beta r^2) t^2: sign is fixed for all t; the
        // critical r counts as admissible up to rounding error.
        if mu < (1.0 - beta) * beta * r * r * (1.0 - 1e-9) {
            return Err(Error::InadmissibleCertificate(format!(
                "alpha = 0 with r = {r} makes P negative for every t"
            )));
        }
        return Ok(0.0);
    }
    if alpha == 1.0 {
        let k = beta * r;
        if k <= 2.0 {
            return Ok(0.0);
        }
        return Ok(((k - 2.0) * (r + 1.0 - k) / mu).sqrt());
    }
    largest_root_numeric(mu, alpha, r, beta)
}

/// Certificate coefficients with the common `e^{beta xi}` weight removed:
/// `(A, B, C)` such that the full coefficients are
/// `(A e^{beta xi / 2}, B e^{beta xi / 2}, C e^{beta xi})` and `D = e^{beta xi}`.
pub fn normalized_coeffs(cert: &LyapunovCertificate, t: f64) -> Result<(f64, f64, f64)> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("t must be positive, got {t}")));
    }
    let (alpha, r, beta) = (cert.alpha, cert.r, cert.beta);
    let s = t.powf(1.0 - alpha);
    let denom = (1.0 - beta) * r * s + alpha;
    let a = (beta * r * s / denom).sqrt();
    let b = (beta * r * denom * t.powf(-alpha - 1.0)).sqrt();
    let c = 1.0 - beta * r * s / denom;
    Ok((a, b, c))
}

fn beta_xi(cert: &LyapunovCertificate, t: f64) -> f64 {
    if cert.alpha == 1.0 {
        cert.beta * cert.r * t.ln()
    } else {
        cert.beta * cert.r * t.powf(1.0 - cert.alpha) / (1.0 - cert.alpha)
    }
}

/// Full coefficients `(A, B, C, D)` of the certificate at time `t`.
///
/// Fails when `e^{beta xi(t)}` overflows; monitors should use the
/// normalized quantities and [`log_lyapunov_value`] instead.
pub fn coeffs(cert: &LyapunovCertificate, t: f64) -> Result<(f64, f64, f64, f64)> {
    let w = beta_xi(cert, t);
    if w.abs() > EXP_OVERFLOW_LIMIT {
        return Err(Error::ExponentialOverflow(format!(
            "beta xi({t}) = {w}; evaluate the certificate in log scale"
        )));
    }
    let (a, b, c) = normalized_coeffs(cert, t)?;
    let half = (0.5 * w).exp();
    let full = w.exp();
    Ok((a * half, b * half, c * full, full))
}

fn require_minimizer<'p>(problem: &'p ObjectiveProblem, what: &str) -> Result<&'p DVector<f64>> {
    problem.minimizer.as_ref().ok_or_else(|| {
        Error::InvalidArgument(format!(
            "{what} requires a problem with a known minimizer; an estimated one cannot certify"
        ))
    })
}

/// The certificate value `L(t)` at state `(x, v)`. Overflows with the
/// coefficients; prefer [`log_lyapunov_value`] for monitoring.
pub fn lyapunov_value(
    cert: &LyapunovCertificate,
    problem: &ObjectiveProblem,
    x: &DVector<f64>,
    v: &DVector<f64>,
    t: f64,
) -> Result<f64> {
    let x_star = require_minimizer(problem, "lyapunov_value")?;
    let (a, b, c, d) = coeffs(cert, t)?;
    let gap = problem.f_gap(x, None).expect("minimizer implies a known gap");
    let cross = v * a + (x - x_star) * b;
    Ok(0.5 * cross.norm_squared() + 0.5 * c * v.norm_squared() + d * gap)
}

/// `log L(t)`, computed as `beta xi(t) + log(normalized value)`; stable for
/// arbitrarily large `t`. Returns `-inf` exactly at the minimizer with
/// zero velocity.
pub fn log_lyapunov_value(
    cert: &LyapunovCertificate,
    problem: &ObjectiveProblem,
    x: &DVector<f64>,
    v: &DVector<f64>,
    t: f64,
) -> Result<f64> {
    let x_star = require_minimizer(problem, "log_lyapunov_value")?;
    let (a, b, c) = normalized_coeffs(cert, t)?;
    let gap = problem.f_gap(x, None).expect("minimizer implies a known gap");
    let cross = v * a + (x - x_star) * b;
    let lt = 0.5 * cross.norm_squared() + 0.5 * c * v.norm_squared() + gap;
    Ok(beta_xi(cert, t) + lt.ln())
}

/// Mechanical energy `||v||^2 / 2 + (f(x) - f*)`; with `f_ref` supplied it
/// is used as `f*`, flagged approximate by the second return value.
pub fn energy(
    problem: &ObjectiveProblem,
    x: &DVector<f64>,
    v: &DVector<f64>,
    f_ref: Option<f64>,
) -> (f64, bool) {
    match problem.f_gap(x, None) {
        Some(gap) => (0.5 * v.norm_squared() + gap, false),
        None => {
            let gap = problem.value(x) - f_ref.unwrap_or(0.0);
            (0.5 * v.norm_squared() + gap, true)
        }
    }
}

/// Convergence-rate envelope: an upper bound `t -> f(x(t)) - f*` valid for
/// `t >= valid_from()`, one variant per regime of the rate theorem.
#[derive(Debug, Clone, Copy)]
pub enum RateEnvelope {
    /// `alpha = 0`, `r = 2 sqrt(mu)`: `c0 e^{-sqrt(mu) t}` from `t = t0`.
    Alpha0 { mu: f64, log_c0: f64, t_from: f64 },
    /// `0 < alpha < 1`, `beta = 1/2`:
    /// `L(T) e^{-r t^{1-alpha} / (2 (1-alpha))}` for `t >= T`.
    AlphaMid { alpha: f64, r: f64, log_l_at: f64, t_from: f64 },
    /// `alpha = 1`, `r > 3`, `beta = (1+r)/(2r)`: `L(T) t^{-(1+r)/2}`.
    Alpha1HighR { r: f64, log_l_at: f64, t_from: f64 },
    /// `alpha = 1`, `r <= 3`, `beta = 2/3`:
    /// `[r/3 (r/3 + 1) t0^{2r/3-2} ||x0-x*||^2 + t0^{2r/3} gap0] t^{-2r/3}`.
    Alpha1LowR { r: f64, log_c: f64, t_from: f64 },
}

impl RateEnvelope {
    /// `alpha = 0` envelope from the initial state `(x0, v = 0)` at `t0`.
    pub fn alpha0(problem: &ObjectiveProblem, x0: &DVector<f64>, mu: f64, t0: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::InvalidArgument(format!("mu must be positive, got {mu}")));
        }
        let x_star = require_minimizer(problem, "rate envelope")?;
        let gap0 = problem.f_gap(x0, None).expect("minimizer implies a known gap");
        let c0 = 0.5 * mu * (x0 - x_star).norm_squared() + gap0;
        Ok(Self::Alpha0 { mu, log_c0: c0.ln(), t_from: t0 })
    }

    /// `0 < alpha < 1` envelope anchored at a sampled `log L` value taken at
    /// `t_at >= cert.t_threshold` (using a later anchor only tightens the
    /// bound, since `L` is nonincreasing past the threshold).
    pub fn alpha_mid(cert: &LyapunovCertificate, log_l_at: f64, t_at: f64) -> Result<Self> {
        if !(cert.alpha > 0.0 && cert.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "mid-range envelope needs 0 < alpha < 1, got {}",
                cert.alpha
            )));
        }
        if cert.beta != 0.5 {
            return Err(Error::InvalidArgument(format!(
                "mid-range envelope is stated for beta = 1/2, got {}",
                cert.beta
            )));
        }
        if t_at < cert.t_threshold {
            return Err(Error::InvalidArgument(format!(
                "anchor t = {t_at} is below the decrease threshold {}",
                cert.t_threshold
            )));
        }
        Ok(Self::AlphaMid { alpha: cert.alpha, r: cert.r, log_l_at, t_from: t_at })
    }

    /// `alpha = 1`, `r > 3` envelope anchored like [`Self::alpha_mid`].
    pub fn alpha1_high_r(cert: &LyapunovCertificate, log_l_at: f64, t_at: f64) -> Result<Self> {
        if cert.alpha != 1.0 || cert.r <= 3.0 {
            return Err(Error::InvalidArgument(format!(
                "this envelope needs alpha = 1 and r > 3, got alpha = {}, r = {}",
                cert.alpha, cert.r
            )));
        }
        let beta = (1.0 + cert.r) / (2.0 * cert.r);
        if (cert.beta - beta).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "this envelope needs beta = (1+r)/(2r) = {beta}, got {}",
                cert.beta
            )));
        }
        if t_at < cert.t_threshold {
            return Err(Error::InvalidArgument(format!(
                "anchor t = {t_at} is below the decrease threshold {}",
                cert.t_threshold
            )));
        }
        Ok(Self::Alpha1HighR { r: cert.r, log_l_at, t_from: t_at })
    }

    /// `alpha = 1`, `r <= 3` envelope from the initial state at `t0`.
    pub fn alpha1_low_r(
        problem: &ObjectiveProblem,
        x0: &DVector<f64>,
        r: f64,
        t0: f64,
    ) -> Result<Self> {
        if !(r > 0.0 && r <= 3.0) {
            return Err(Error::InvalidArgument(format!(
                "this envelope needs 0 < r <= 3, got {r}"
            )));
        }
        if !(t0 > 0.0) {
            return Err(Error::InvalidArgument(format!("t0 must be positive, got {t0}")));
        }
        let x_star = require_minimizer(problem, "rate envelope")?;
        let gap0 = problem.f_gap(x0, None).expect("minimizer implies a known gap");
        let q = r / 3.0;
        let c = q * (q + 1.0) * t0.powf(2.0 * q - 2.0) * (x0 - x_star).norm_squared()
            + t0.powf(2.0 * q) * gap0;
        Ok(Self::Alpha1LowR { r, log_c: c.ln(), t_from: t0 })
    }

    /// Start of the envelope's validity range.
    pub fn valid_from(&self) -> f64 {
        match *self {
            Self::Alpha0 { t_from, .. }
            | Self::AlphaMid { t_from, .. }
            | Self::Alpha1HighR { t_from, .. }
            | Self::Alpha1LowR { t_from, .. } => t_from,
        }
    }

    /// `log` of the upper bound at time `t`.
    pub fn log_bound(&self, t: f64) -> f64 {
        match *self {
            Self::Alpha0 { mu, log_c0, .. } => log_c0 - mu.sqrt() * t,
            Self::AlphaMid { alpha, r, log_l_at, .. } => {
                log_l_at - r * t.powf(1.0 - alpha) / (2.0 * (1.0 - alpha))
            }
            Self::Alpha1HighR { r, log_l_at, .. } => log_l_at - 0.5 * (1.0 + r) * t.ln(),
            Self::Alpha1LowR { r, log_c, .. } => log_c - (2.0 * r / 3.0) * t.ln(),
        }
    }

    /// The upper bound itself (may underflow to zero for very large `t`).
    pub fn bound(&self, t: f64) -> f64 {
        self.log_bound(t).exp()
    }
}

/// One monitored sample: `log L`, its forward increment, pass/fail.
#[derive(Debug, Clone, Copy)]
pub struct MonitorRow {
    pub t: f64,
    pub log_l: f64,
    /// `log L` increment from the previous monitored sample (0 for the first).
    pub increment: f64,
    pub ok: bool,
}

/// Outcome of a monotonicity sweep over a trajectory.
#[derive(Debug, Clone)]
pub struct MonitorReport {
    pub rows: Vec<MonitorRow>,
    pub max_increment: f64,
    pub first_violation_t: Option<f64>,
}

impl MonitorReport {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| !r.ok).count()
    }

    /// Writes the `t,logL,increment,verdict` CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,logL,increment,verdict")?;
        for row in &self.rows {
            writeln!(
                w,
                "{},{},{},{}",
                row.t,
                row.log_l,
                row.increment,
                if row.ok { "ok" } else { "violation" }
            )?;
        }
        Ok(())
    }
}

/// Checks that `log L` is nonincreasing (slack [`MONITOR_SLACK`]) over the
/// trajectory samples with `t >= cert.t_threshold`.
pub fn monitor_decrease(
    trajectory: &ReferenceTrajectory,
    cert: &LyapunovCertificate,
    problem: &ObjectiveProblem,
) -> Result<MonitorReport> {
    let monitored: Vec<_> = trajectory
        .samples
        .iter()
        .filter(|s| s.t >= cert.t_threshold)
        .collect();
    if monitored.len() < 2 {
        return Err(Error::TrajectoryTooShort(format!(
            "only {} samples at or past the threshold t = {}",
            monitored.len(),
            cert.t_threshold
        )));
    }
    let mut rows = Vec::with_capacity(monitored.len());
    let mut max_increment = f64::NEG_INFINITY;
    let mut first_violation_t = None;
    let mut prev: Option<f64> = None;
    for s in monitored {
        let log_l = log_lyapunov_value(cert, problem, &s.x, &s.v, s.t)?;
        let increment = prev.map_or(0.0, |p| log_l - p);
        let ok = increment <= MONITOR_SLACK;
        if !ok && first_violation_t.is_none() {
            first_violation_t = Some(s.t);
        }
        if prev.is_some() {
            max_increment = max_increment.max(increment);
        }
        rows.push(MonitorRow { t: s.t, log_l, increment, ok });
        prev = Some(log_l);
    }
    Ok(MonitorReport { rows, max_increment, first_violation_t })
}
