//! Linear stability of the symplectic Euler splitting.
//!
//! Along a Hessian eigendirection with eigenvalue `lambda`, one linearized
//! step is the 2x2 map
//!
//! ```text
//! S = [ 1 - h^2 k u lambda   h k ]
//!     [    -h u lambda        1  ]
//! ```
//!
//! with unit determinant. Strict stability (two distinct eigenvalues on the
//! unit circle) is equivalent to `|trace| < 2`, i.e. `h^2 k u lambda < 4`.

use std::io::Write;

use crate::schedules::BregmanPolyParams;
use crate::{Error, Result};

/// One linearized integrator step along a Hessian eigendirection, together
/// with the parameters it was built from.
#[derive(Debug, Clone, Copy)]
pub struct StabilityBlock {
    /// Row-major entries of the 2x2 step matrix.
    pub entries: [[f64; 2]; 2],
    pub h: f64,
    pub k: f64,
    pub u: f64,
    pub lambda: f64,
}

impl StabilityBlock {
    pub fn trace(&self) -> f64 {
        self.entries[0][0] + self.entries[1][1]
    }

    pub fn det(&self) -> f64 {
        self.entries[0][0] * self.entries[1][1] - self.entries[0][1] * self.entries[1][0]
    }
}

/// Builds the stability block for step `h`, coefficients `k`, `u` and
/// eigenvalue `lambda >= 0`.
pub fn stability_block(h: f64, k: f64, u: f64, lambda: f64) -> StabilityBlock {
    StabilityBlock {
        entries: [[1.0 - h * h * k * u * lambda, h * k], [-h * u * lambda, 1.0]],
        h,
        k,
        u,
        lambda,
    }
}

/// Spectral radius of a unit-determinant 2x2 block and the strict stability
/// verdict `|trace| < 2`.
///
/// `|trace| = 2` is the marginal Jordan-block case (`lambda = 0` shear):
/// radius one but not diagonalizable, reported as not strictly stable.
pub fn spectral_radius_2x2(block: &StabilityBlock) -> (f64, bool) {
    let tr = block.trace();
    let det = block.det();
    let disc = tr * tr - 4.0 * det;
    if disc <= 0.0 {
        // Complex pair with |eig| = sqrt(det).
        (det.sqrt(), tr.abs() < 2.0)
    } else {
        let root = disc.sqrt();
        let radius = ((tr.abs() + root) / 2.0).max((2.0 * det.abs() / (tr.abs() + root)).abs());
        (radius, false)
    }
}

/// Supremum step size from the stability condition `h^2 (b/a) L < 4`.
///
/// For the damped family `k u = 1` and the bound is `2 / sqrt(L)`; for the
/// scheme with general coefficients pass `k = 1/a(t)` and `u = b(t)`.
pub fn theorem1_bound(k_t: f64, u_t: f64, lipschitz: f64) -> Result<f64> {
    if !(k_t > 0.0 && u_t > 0.0 && lipschitz > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "k, u, L must all be positive (got {k_t}, {u_t}, {lipschitz})"
        )));
    }
    Ok((4.0 / (k_t * u_t * lipschitz)).sqrt())
}

/// Step-size bound of the polynomial subfamily at time `t_n`:
/// `sqrt(4 / (C L p^2 t_n^(p-2)))`.
///
/// With `C = 1/(L p^2)` this is `2 / sqrt(t_n^(p-2))`, and the schedule
/// `h_n = sqrt(1 / t_n^(p-2))` sits strictly inside it. For `p = 2` the
/// bound is the fixed step `sqrt(4/(C L p^2))`.
pub fn corollary1_schedule(params: &BregmanPolyParams, lipschitz: f64, t_n: f64) -> Result<f64> {
    if !(t_n > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "t_n must be positive, got {t_n}"
        )));
    }
    if !(lipschitz > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "L must be positive, got {lipschitz}"
        )));
    }
    let ratio = params.c * params.p * params.p * t_n.powf(params.p - 2.0);
    Ok((4.0 / (ratio * lipschitz)).sqrt())
}

/// One row of a stability report.
#[derive(Debug, Clone, Copy)]
pub struct StabilityRow {
    pub h: f64,
    pub t: f64,
    pub lambda: f64,
    pub radius: f64,
    pub strictly_stable: bool,
}

/// Verdict over a spectrum: the strict criterion is taken over positive
/// eigenvalues only; `lambda = 0` modes are marginal shears (bounded with
/// the standard zero-momentum start) and do not flip the verdict.
pub fn spectrum_report(h: f64, t: f64, k: f64, u: f64, spectrum: &[f64]) -> Vec<StabilityRow> {
    spectrum
        .iter()
        .map(|&lambda| {
            let block = stability_block(h, k, u, lambda);
            let (radius, strict) = spectral_radius_2x2(&block);
            StabilityRow {
                h,
                t,
                lambda,
                radius,
                strictly_stable: strict || lambda == 0.0,
            }
        })
        .collect()
}

/// Serializes stability rows as `h,t,lambda,radius,verdict` CSV.
pub fn write_stability_csv<W: Write>(mut w: W, rows: &[StabilityRow]) -> Result<()> {
    writeln!(w, "h,t,lambda,radius,verdict")?;
    for row in rows {
        let verdict = if row.strictly_stable { "stable" } else { "unstable" };
        writeln!(w, "{},{},{},{},{}", row.h, row.t, row.lambda, row.radius, verdict)?;
    }
    Ok(())
}
