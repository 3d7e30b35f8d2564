//! Discrete steppers, trajectory recording and the reference ODE solver.
//!
//! The symplectic Euler splitting for the time-dependent Hamiltonian
//! `H = k(t)||y||^2/2 + u(t) f(x)` is
//!
//! ```text
//! y_{n+1} = y_n - h u(t_n) grad f(x_n)
//! x_{n+1} = x_n + h k(t_n) y_{n+1}
//! t_{n+1} = t_n + h
//! ```
//!
//! For the damped family `k = e^{-xi}`, `u = e^{xi}` the momentum `y_n`
//! grows like `e^{xi(t_{n-1})}`, so production runs use the equivalent
//! velocity form `v_n = e^{-xi(t_{n-1})} y_n`, whose decay factors stay in
//! `(0, 1]`.

use std::io::Write;

use nalgebra::DVector;

use crate::problems::ObjectiveProblem;
use crate::schedules::{xi, DampedFlowParams};
use crate::{Error, Result};

/// Norm / gap threshold beyond which a run is declared divergent. Chosen to
/// capture fixed-step blow-ups well before floating-point infinity.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// What the auxiliary vector of a state means.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeTag {
    /// `aux` unused.
    GradientDescent,
    /// `aux` is NAG's extrapolation point `y_n`.
    NagExtrapolation,
    /// `aux` is the conjugate momentum `y_n` of the splitting scheme.
    Momentum,
    /// `aux` is the velocity `v_n = e^{-xi(t_{n-1})} y_n`.
    Velocity,
}

/// Snapshot of a discrete trajectory.
#[derive(Debug, Clone)]
pub struct IntegratorState {
    pub x: DVector<f64>,
    pub aux: DVector<f64>,
    pub t: f64,
    pub n: usize,
    pub tag: SchemeTag,
}

impl IntegratorState {
    /// Standard start: `aux = 0`, iteration counter 0.
    pub fn start(x0: DVector<f64>, t0: f64, tag: SchemeTag) -> Self {
        let aux = match tag {
            // NAG initializes its extrapolation point at x0.
            SchemeTag::NagExtrapolation => x0.clone(),
            _ => DVector::zeros(x0.len()),
        };
        Self { x: x0, aux, t: t0, n: 0, tag }
    }
}

fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    Ok(())
}

/// Plain gradient descent: `x <- x - h grad f(x)`.
pub fn step_gd(problem: &ObjectiveProblem, state: &IntegratorState, h: f64) -> Result<IntegratorState> {
    check_step(h)?;
    let x = &state.x - problem.gradient(&state.x) * h;
    Ok(IntegratorState { x, aux: state.aux.clone(), t: state.t + h, n: state.n + 1, tag: state.tag })
}

/// Nesterov's method for convex objectives, momentum weight `n/(n+3)`.
pub fn step_nag(problem: &ObjectiveProblem, state: &IntegratorState, h: f64) -> Result<IntegratorState> {
    check_step(h)?;
    let y = &state.aux;
    let x_next = y - problem.gradient(y) * h;
    let coeff = state.n as f64 / (state.n as f64 + 3.0);
    let y_next = &x_next + (&x_next - &state.x) * coeff;
    Ok(IntegratorState {
        x: x_next,
        aux: y_next,
        t: state.t + h,
        n: state.n + 1,
        tag: SchemeTag::NagExtrapolation,
    })
}

/// Nesterov's method for strongly convex objectives, momentum weight
/// `(1 - sqrt(mu h)) / (1 + sqrt(mu h))`. Requires `mu h <= 1`.
pub fn step_nag_sc(
    problem: &ObjectiveProblem,
    state: &IntegratorState,
    h: f64,
    mu: f64,
) -> Result<IntegratorState> {
    check_step(h)?;
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument(format!("mu must be positive, got {mu}")));
    }
    if mu * h > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "mu * h = {} exceeds 1; the momentum weight analysis assumes sqrt(mu h) <= 1",
            mu * h
        )));
    }
    let s = (mu * h).sqrt();
    let y = &state.aux;
    let x_next = y - problem.gradient(y) * h;
    let coeff = (1.0 - s) / (1.0 + s);
    let y_next = &x_next + (&x_next - &state.x) * coeff;
    Ok(IntegratorState {
        x: x_next,
        aux: y_next,
        t: state.t + h,
        n: state.n + 1,
        tag: SchemeTag::NagExtrapolation,
    })
}

/// Symplectic Euler step with caller-supplied coefficients `k(t_n)`,
/// `u(t_n)`; `aux` holds the momentum.
pub fn step_symplectic_euler(
    state: &IntegratorState,
    k_t: f64,
    u_t: f64,
    problem: &ObjectiveProblem,
    h: f64,
) -> Result<IntegratorState> {
    check_step(h)?;
    let y_next = &state.aux - problem.gradient(&state.x) * (h * u_t);
    let x_next = &state.x + &y_next * (h * k_t);
    Ok(IntegratorState {
        x: x_next,
        aux: y_next,
        t: state.t + h,
        n: state.n + 1,
        tag: SchemeTag::Momentum,
    })
}

/// Overflow-safe velocity form of the damped scheme:
/// `v_{n+1} = e^{xi(t_{n-1}) - xi(t_n)} v_n - h grad f(x_n)`,
/// `x_{n+1} = x_n + h v_{n+1}`.
///
/// At `n = 0` the decay factor references `xi(t_{-1})`, which the recursion
/// never defines; it is fixed to 1, immaterial because `v_0 = 0`.
pub fn step_damped_velocity(
    problem: &ObjectiveProblem,
    state: &IntegratorState,
    params: &DampedFlowParams,
    h: f64,
) -> Result<IntegratorState> {
    check_step(h)?;
    let decay = if state.n == 0 {
        1.0
    } else {
        let prev_t = state.t - h;
        (xi(params, prev_t, 0)? - xi(params, state.t, 0)?).exp()
    };
    let v_next = &state.aux * decay - problem.gradient(&state.x) * h;
    let x_next = &state.x + &v_next * h;
    Ok(IntegratorState {
        x: x_next,
        aux: v_next,
        t: state.t + h,
        n: state.n + 1,
        tag: SchemeTag::Velocity,
    })
}

/// One logged trajectory row.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryRow {
    pub n: usize,
    pub t: f64,
    pub f_gap: f64,
    pub grad_norm: f64,
    pub energy: Option<f64>,
    pub lyapunov: Option<f64>,
    pub step: f64,
}

/// Per-iteration log of a run; the carrier for the figure data.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryRecord {
    pub rows: Vec<TrajectoryRow>,
}

impl TrajectoryRecord {
    /// Writes the `n,t,f_gap,grad_norm,energy,lyapunov,step` CSV. Optional
    /// columns are left empty when absent.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,t,f_gap,grad_norm,energy,lyapunov,step")?;
        for row in &self.rows {
            let energy = row.energy.map(|v| v.to_string()).unwrap_or_default();
            let lyap = row.lyapunov.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                row.n, row.t, row.f_gap, row.grad_norm, energy, lyap, row.step
            )?;
        }
        Ok(())
    }
}

/// Recording options for [`integrate`].
pub struct RecordSpec<'a> {
    pub record_every: usize,
    /// Reference minimum used when the problem does not know its own; with
    /// neither, gaps are logged relative to zero.
    pub f_ref: Option<f64>,
    /// Optional Lyapunov column (typically a certificate's log-value).
    #[allow(clippy::type_complexity)]
    pub lyapunov: Option<&'a (dyn Fn(&IntegratorState) -> f64 + 'a)>,
}

impl Default for RecordSpec<'_> {
    fn default() -> Self {
        Self { record_every: 1, f_ref: None, lyapunov: None }
    }
}

/// Outcome of a recorded run. A divergent run keeps its truncated record
/// for blow-up plots.
#[derive(Debug, Clone)]
pub struct IntegrationRun {
    pub record: TrajectoryRecord,
    pub final_state: IntegratorState,
    /// Iteration at which the divergence guard fired, if it did.
    pub diverged_at: Option<usize>,
}

fn record_row(
    problem: &ObjectiveProblem,
    state: &IntegratorState,
    spec: &RecordSpec,
    step: f64,
) -> TrajectoryRow {
    let f_gap = problem.f_gap(&state.x, spec.f_ref).unwrap_or_else(|| problem.value(&state.x));
    let grad_norm = problem.gradient(&state.x).norm();
    let energy = match state.tag {
        SchemeTag::Velocity => Some(0.5 * state.aux.norm_squared() + f_gap),
        _ => None,
    };
    let lyapunov = spec.lyapunov.map(|f| f(state));
    TrajectoryRow { n: state.n, t: state.t, f_gap, grad_norm, energy, lyapunov, step }
}

/// Applies `stepper` `n_steps` times, recording every `record_every`
/// iterations (plus the initial and final states). Stops early when the
/// divergence guard fires.
pub fn integrate<F>(
    problem: &ObjectiveProblem,
    mut stepper: F,
    initial: IntegratorState,
    n_steps: usize,
    spec: &RecordSpec,
) -> Result<IntegrationRun>
where
    F: FnMut(&ObjectiveProblem, &IntegratorState) -> Result<IntegratorState>,
{
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
    }
    if spec.record_every == 0 {
        return Err(Error::InvalidArgument("record_every must be at least 1".into()));
    }
    let mut record = TrajectoryRecord::default();
    record.rows.push(record_row(problem, &initial, spec, 0.0));
    let mut state = initial;
    let mut diverged_at = None;
    for _ in 0..n_steps {
        let prev_t = state.t;
        let next = stepper(problem, &state)?;
        let step = next.t - prev_t;
        state = next;
        let should_record = state.n % spec.record_every == 0 || state.n == n_steps;
        // The full row costs an extra gradient; off-record iterations only
        // pay the O(dim) norm guard.
        let norm = state.x.norm();
        if should_record || !norm.is_finite() || norm > DIVERGENCE_THRESHOLD {
            let row = record_row(problem, &state, spec, step);
            record.rows.push(row);
            if !row.f_gap.is_finite()
                || row.f_gap.abs() > DIVERGENCE_THRESHOLD
                || norm > DIVERGENCE_THRESHOLD
                || !norm.is_finite()
            {
                diverged_at = Some(state.n);
                break;
            }
        }
    }
    Ok(IntegrationRun { record, final_state: state, diverged_at })
}

/// One sample of the continuous-time reference solution.
#[derive(Debug, Clone)]
pub struct OdeSample {
    pub t: f64,
    pub x: DVector<f64>,
    pub v: DVector<f64>,
}

/// High-accuracy trajectory of the damped flow; the oracle for Lyapunov and
/// rate checks.
#[derive(Debug, Clone)]
pub struct ReferenceTrajectory {
    pub samples: Vec<OdeSample>,
}

impl ReferenceTrajectory {
    /// Energy `||v||^2/2 + (f - f*)` along the samples.
    pub fn energies(&self, problem: &ObjectiveProblem, f_ref: Option<f64>) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| {
                let gap = problem.f_gap(&s.x, f_ref).unwrap_or_else(|| problem.value(&s.x));
                0.5 * s.v.norm_squared() + gap
            })
            .collect()
    }
}

/// Classical fourth-order Runge-Kutta on `x' = v`,
/// `v' = -(r/t^alpha) v - grad f(x)`, fixed step `h_ref`, from
/// `(x0, v = 0, t0)`, keeping every `sample_every`-th step.
pub fn reference_solve(
    problem: &ObjectiveProblem,
    params: &DampedFlowParams,
    x0: &DVector<f64>,
    t_end: f64,
    h_ref: f64,
    sample_every: usize,
) -> Result<ReferenceTrajectory> {
    if !(t_end > params.t0) {
        return Err(Error::InvalidArgument(format!(
            "t_end {} must exceed t0 {}",
            t_end, params.t0
        )));
    }
    check_step(h_ref)?;
    if sample_every == 0 {
        return Err(Error::InvalidArgument("sample_every must be at least 1".into()));
    }
    let n_steps = ((t_end - params.t0) / h_ref).ceil() as usize;
    let damping = |t: f64| params.r * t.powf(-params.alpha);
    let mut x = x0.clone();
    let mut v = DVector::zeros(x0.len());
    let mut t = params.t0;
    let mut samples = vec![OdeSample { t, x: x.clone(), v: v.clone() }];
    for i in 0..n_steps {
        let accel = |t: f64, x: &DVector<f64>, v: &DVector<f64>| -> DVector<f64> {
            -v * damping(t) - problem.gradient(x)
        };
        let h = h_ref;
        let k1x = v.clone();
        let k1v = accel(t, &x, &v);
        let k2x = &v + &k1v * (h / 2.0);
        let k2v = accel(t + h / 2.0, &(&x + &k1x * (h / 2.0)), &k2x);
        let k3x = &v + &k2v * (h / 2.0);
        let k3v = accel(t + h / 2.0, &(&x + &k2x * (h / 2.0)), &k3x);
        let k4x = &v + &k3v * h;
        let k4v = accel(t + h, &(&x + &k3x * h), &k4x);
        x += (k1x + &k2x * 2.0 + &k3x * 2.0 + k4x) * (h / 6.0);
        v += (k1v + &k2v * 2.0 + &k3v * 2.0 + k4v) * (h / 6.0);
        t += h;
        if x.norm() > DIVERGENCE_THRESHOLD {
            break;
        }
        if (i + 1) % sample_every == 0 || i + 1 == n_steps {
            samples.push(OdeSample { t, x: x.clone(), v: v.clone() });
        }
    }
    Ok(ReferenceTrajectory { samples })
}

/// A point of the extended phase space `(x, t, y, epsilon)`.
#[derive(Debug, Clone)]
pub struct ExtendedState {
    pub x: DVector<f64>,
    pub t: f64,
    pub y: DVector<f64>,
    pub eps: f64,
}

fn extended_step(
    problem: &ObjectiveProblem,
    params: &DampedFlowParams,
    z: &ExtendedState,
    h: f64,
    drop_eps_update: bool,
) -> Result<ExtendedState> {
    let xi0 = xi(params, z.t, 0)?;
    let xid = xi(params, z.t, 1)?;
    let k = (-xi0).exp();
    let u = xi0.exp();
    let k_dot = -xid * k;
    let u_dot = xid * u;
    let y1 = &z.y - problem.gradient(&z.x) * (h * u);
    let x1 = &z.x + &y1 * (h * k);
    let eps1 = if drop_eps_update {
        z.eps
    } else {
        z.eps - 0.5 * h * k_dot * y1.norm_squared() - h * u_dot * problem.value(&z.x)
    };
    Ok(ExtendedState { x: x1, t: z.t + h, y: y1, eps: eps1 })
}

fn symplecticity_defect_impl(
    problem: &ObjectiveProblem,
    params: &DampedFlowParams,
    state: &ExtendedState,
    h: f64,
    drop_eps_update: bool,
) -> Result<f64> {
    let d = state.x.len();
    let m = 2 * (d + 1);
    let pack = |s: &ExtendedState| -> Vec<f64> {
        let mut z = Vec::with_capacity(m);
        z.extend(s.x.iter());
        z.push(s.t);
        z.extend(s.y.iter());
        z.push(s.eps);
        z
    };
    let unpack = |z: &[f64]| -> ExtendedState {
        ExtendedState {
            x: DVector::from_row_slice(&z[..d]),
            t: z[d],
            y: DVector::from_row_slice(&z[d + 1..2 * d + 1]),
            eps: z[2 * d + 1],
        }
    };
    let z0 = pack(state);
    let delta = 1e-6;
    // Jacobian by central differences, column j = d(map)/dz_j.
    let mut jac = vec![vec![0.0f64; m]; m];
    for j in 0..m {
        let mut zp = z0.clone();
        zp[j] += delta;
        let fp = pack(&extended_step(problem, params, &unpack(&zp), h, drop_eps_update)?);
        let mut zm = z0.clone();
        zm[j] -= delta;
        let fm = pack(&extended_step(problem, params, &unpack(&zm), h, drop_eps_update)?);
        for (i, row) in jac.iter_mut().enumerate() {
            row[j] = (fp[i] - fm[i]) / (2.0 * delta);
        }
    }
    // Canonical form on (X, Y) = ((x, t), (y, eps)): Omega = [[0, I], [-I, 0]].
    let half = d + 1;
    let omega = |i: usize, j: usize| -> f64 {
        if i < half && j == i + half {
            1.0
        } else if i >= half && j == i - half {
            -1.0
        } else {
            0.0
        }
    };
    let mut defect = 0.0f64;
    for a in 0..m {
        for b in 0..m {
            // (J^T Omega J)_{ab} = sum_{i,j} J_{ia} Omega_{ij} J_{jb}
            let mut s = 0.0;
            for i in 0..m {
                let ji = jac[i][a];
                if ji == 0.0 {
                    continue;
                }
                for j in 0..m {
                    let w = omega(i, j);
                    if w != 0.0 {
                        s += ji * w * jac[j][b];
                    }
                }
            }
            defect = defect.max((s - omega(a, b)).abs());
        }
    }
    Ok(defect)
}

/// Finite-difference check that one step of the extended splitting map
/// preserves the canonical 2-form: returns `max |J' Omega J - Omega|`.
///
/// Test oracle only; intended for `dim <= 3`.
pub fn extended_symplecticity_defect(
    problem: &ObjectiveProblem,
    params: &DampedFlowParams,
    state: &ExtendedState,
    h: f64,
) -> Result<f64> {
    symplecticity_defect_impl(problem, params, state, h, false)
}

/// Negative control: the same map with the `epsilon` update removed, which
/// destroys symplecticity.
pub fn extended_symplecticity_defect_broken(
    problem: &ObjectiveProblem,
    params: &DampedFlowParams,
    state: &ExtendedState,
    h: f64,
) -> Result<f64> {
    symplecticity_defect_impl(problem, params, state, h, true)
}
