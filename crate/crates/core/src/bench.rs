//! Experiment runner behind the CLI: problem/method configuration, step
//! resolution, seeded runs, parameter sweeps and CSV emission.
//!
//! Runs are deterministic: the problem instance is drawn from the config
//! seed and the start point from an independent stream of the same seed, so
//! identical configs produce byte-identical CSV output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::integrators::{
    integrate, step_damped_velocity, step_gd, step_nag, step_nag_sc, step_symplectic_euler,
    IntegratorState, RecordSpec, SchemeTag, TrajectoryRecord,
};
use crate::problems::{make_log_sum_exp, make_quadratic, ObjectiveProblem};
use crate::schedules::{bregman_coeffs, BregmanPolyParams, DampedFlowParams};
use crate::stability::{corollary1_schedule, theorem1_bound};
use crate::{Error, Result};

/// Safety factor applied to stability bounds when resolving `h = auto`.
pub const AUTO_STEP_SAFETY: f64 = 0.999;

/// Which problem instance to draw.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Quadratic { dim: usize, eig_min: f64, eig_max: f64, b_std: f64, seed: u64 },
    LogSumExp { dim: usize, m: usize, rho: f64, seed: u64 },
}

impl ProblemSpec {
    pub fn seed(&self) -> u64 {
        match *self {
            Self::Quadratic { seed, .. } | Self::LogSumExp { seed, .. } => seed,
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            Self::Quadratic { dim, .. } | Self::LogSumExp { dim, .. } => dim,
        }
    }

    fn label(&self) -> String {
        match *self {
            Self::Quadratic { dim, eig_min, eig_max, .. } => {
                format!("quadratic(dim={dim},eig_min={eig_min},eig_max={eig_max})")
            }
            Self::LogSumExp { dim, m, rho, .. } => {
                format!("logsumexp(dim={dim},m={m},rho={rho})")
            }
        }
    }
}

/// Which iteration to run. `Bregman`'s `c` defaults to `1/(L p^2)` (the
/// choice that makes the stability bound time-independent at `p = 2`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MethodSpec {
    Gd,
    Nag,
    NagSc,
    Damped { alpha: f64, r: f64 },
    Bregman { p: f64, c: Option<f64> },
}

impl MethodSpec {
    fn label(&self) -> String {
        match *self {
            Self::Gd => "gd".into(),
            Self::Nag => "nag".into(),
            Self::NagSc => "nagsc".into(),
            Self::Damped { alpha, r } => format!("damped(alpha={alpha},r={r})"),
            Self::Bregman { p, c } => match c {
                Some(c) => format!("bregman(p={p},C={c})"),
                None => format!("bregman(p={p},C=auto)"),
            },
        }
    }
}

/// Fixed step or `auto` (resolved against the applicable stability bound
/// before the run starts).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    Fixed(f64),
    Auto,
}

/// One experiment: problem, method, step policy, horizon, output.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub method: MethodSpec,
    pub h: StepSize,
    pub n_iters: usize,
    pub t0: f64,
    pub record_every: usize,
    /// Trajectory CSV destination; `None` keeps the record in memory only.
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.n_iters == 0 {
            return Err(Error::InvalidArgument("iters must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidArgument("record_every must be at least 1".into()));
        }
        if !(self.t0 > 0.0) {
            return Err(Error::InvalidArgument(format!("t0 must be positive, got {}", self.t0)));
        }
        if let StepSize::Fixed(h) = self.h {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidArgument(format!("h must be positive, got {h}")));
            }
        }
        if let MethodSpec::Damped { alpha, r } = self.method {
            DampedFlowParams::new(alpha, r, self.t0)?;
        }
        if let MethodSpec::Bregman { p, c } = self.method {
            BregmanPolyParams::new(p, c.unwrap_or(1.0))?;
        }
        Ok(())
    }
}

/// Plot-ready run facts, printed as `key=value` lines.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub problem: String,
    pub method: String,
    pub seed: u64,
    pub t0: f64,
    /// Resolved step for fixed-step methods; initial step for schedules.
    pub h_initial: f64,
    pub h_mode: String,
    pub iters_requested: usize,
    pub iters_done: usize,
    pub final_f_gap: f64,
    pub final_grad_norm: f64,
    pub diverged: bool,
    pub diverged_at: Option<usize>,
    pub f_star_estimated: bool,
    pub wall_time_s: f64,
}

impl RunSummary {
    pub fn key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("problem".into(), self.problem.clone()),
            ("method".into(), self.method.clone()),
            ("seed".into(), self.seed.to_string()),
            ("t0".into(), self.t0.to_string()),
            ("h".into(), self.h_initial.to_string()),
            ("h_mode".into(), self.h_mode.clone()),
            ("iters_requested".into(), self.iters_requested.to_string()),
            ("iters_done".into(), self.iters_done.to_string()),
            ("final_f_gap".into(), self.final_f_gap.to_string()),
            ("final_grad_norm".into(), self.final_grad_norm.to_string()),
            ("diverged".into(), self.diverged.to_string()),
            ("f_star_estimated".into(), self.f_star_estimated.to_string()),
            ("wall_time_s".into(), format!("{:.3}", self.wall_time_s)),
        ];
        if let Some(n) = self.diverged_at {
            kv.push(("diverged_at".into(), n.to_string()));
        }
        kv
    }

    pub fn print(&self) {
        for (k, v) in self.key_values() {
            println!("{k}={v}");
        }
    }
}

/// A finished run: the recorded trajectory plus its summary.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: TrajectoryRecord,
    pub summary: RunSummary,
}

/// Builds the configured problem instance.
pub fn build_problem(spec: &ProblemSpec) -> Result<ObjectiveProblem> {
    match *spec {
        ProblemSpec::Quadratic { dim, eig_min, eig_max, b_std, seed } => {
            make_quadratic(dim, eig_min, eig_max, b_std, seed)
        }
        ProblemSpec::LogSumExp { dim, m, rho, seed } => make_log_sum_exp(dim, m, rho, seed),
    }
}

/// Start point: i.i.d. standard Gaussian on an RNG stream independent of
/// the problem instance's, keyed by the same seed.
pub fn draw_x0(dim: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Resolves `auto` against the stability bound of the method: `1/L` for the
/// gradient-based baselines, `0.999 * sqrt(4/L)` for the damped scheme
/// (`k u = 1`), and the per-step schedule bound for the polynomial family.
fn resolve_initial_step(
    method: &MethodSpec,
    h: StepSize,
    problem: &ObjectiveProblem,
    t0: f64,
) -> Result<f64> {
    let l = problem.lipschitz;
    let resolved = match (h, method) {
        (StepSize::Fixed(v), _) => v,
        (StepSize::Auto, MethodSpec::Gd | MethodSpec::Nag | MethodSpec::NagSc) => 1.0 / l,
        (StepSize::Auto, MethodSpec::Damped { .. }) => AUTO_STEP_SAFETY * theorem1_bound(1.0, 1.0, l)?,
        (StepSize::Auto, MethodSpec::Bregman { p, c }) => {
            let params = bregman_params(*p, *c, l)?;
            AUTO_STEP_SAFETY * corollary1_schedule(&params, l, t0)?
        }
    };
    if !(resolved > 0.0 && resolved.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "resolved step {resolved} is not a positive finite number"
        )));
    }
    Ok(resolved)
}

fn bregman_params(p: f64, c: Option<f64>, l: f64) -> Result<BregmanPolyParams> {
    BregmanPolyParams::new(p, c.unwrap_or(1.0 / (l * p * p)))
}

/// Runs one experiment end to end; writes the trajectory CSV when an
/// output path is configured. Divergence is a recorded outcome, not an
/// error.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let started = Instant::now();
    let problem = build_problem(&config.problem)?;
    let seed = config.problem.seed();
    let x0 = draw_x0(problem.dim, seed);
    let (f_ref, f_star_estimated) = match &config.problem {
        ProblemSpec::Quadratic { .. } => (None, false),
        ProblemSpec::LogSumExp { dim, m, rho, seed } => {
            let dir = config
                .out
                .as_deref()
                .and_then(Path::parent)
                .filter(|p| !p.as_os_str().is_empty())
                .map(Path::to_path_buf)
                .unwrap_or_else(|| PathBuf::from("."));
            (Some(resolve_f_star(*dim, *m, *rho, *seed, &dir)?), true)
        }
    };
    let h0 = resolve_initial_step(&config.method, config.h, &problem, config.t0)?;
    let spec = RecordSpec { record_every: config.record_every, f_ref, lyapunov: None };
    let run = match config.method {
        MethodSpec::Gd => {
            let initial = IntegratorState::start(x0, config.t0, SchemeTag::GradientDescent);
            integrate(&problem, |p, s| step_gd(p, s, h0), initial, config.n_iters, &spec)?
        }
        MethodSpec::Nag => {
            let initial = IntegratorState::start(x0, config.t0, SchemeTag::NagExtrapolation);
            integrate(&problem, |p, s| step_nag(p, s, h0), initial, config.n_iters, &spec)?
        }
        MethodSpec::NagSc => {
            let mu = problem.strong_mu.ok_or_else(|| {
                Error::InvalidArgument(
                    "nagsc needs a known strong-convexity constant; this problem has none".into(),
                )
            })?;
            let initial = IntegratorState::start(x0, config.t0, SchemeTag::NagExtrapolation);
            integrate(&problem, |p, s| step_nag_sc(p, s, h0, mu), initial, config.n_iters, &spec)?
        }
        MethodSpec::Damped { alpha, r } => {
            let params = DampedFlowParams::new(alpha, r, config.t0)?;
            let initial = IntegratorState::start(x0, config.t0, SchemeTag::Velocity);
            integrate(
                &problem,
                |p, s| step_damped_velocity(p, s, &params, h0),
                initial,
                config.n_iters,
                &spec,
            )?
        }
        MethodSpec::Bregman { p, c } => {
            let params = bregman_params(p, c, problem.lipschitz)?;
            let l = problem.lipschitz;
            let scheduled = matches!(config.h, StepSize::Auto);
            let initial = IntegratorState::start(x0, config.t0, SchemeTag::Momentum);
            integrate(
                &problem,
                |pb, s| {
                    let h = if scheduled {
                        AUTO_STEP_SAFETY * corollary1_schedule(&params, l, s.t)?
                    } else {
                        h0
                    };
                    let (a, b) = bregman_coeffs(&params, s.t)?;
                    step_symplectic_euler(s, 1.0 / a, b, pb, h)
                },
                initial,
                config.n_iters,
                &spec,
            )?
        }
    };
    if let Some(path) = &config.out {
        let mut file = fs::File::create(path)?;
        run.record.write_csv(&mut file)?;
    }
    let last = run.record.rows.last().expect("integrate always records");
    let summary = RunSummary {
        problem: config.problem.label(),
        method: config.method.label(),
        seed,
        t0: config.t0,
        h_initial: h0,
        h_mode: match config.h {
            StepSize::Fixed(_) => "fixed".into(),
            StepSize::Auto => "auto".into(),
        },
        iters_requested: config.n_iters,
        iters_done: run.final_state.n,
        final_f_gap: last.f_gap,
        final_grad_norm: last.grad_norm,
        diverged: run.diverged_at.is_some(),
        diverged_at: run.diverged_at,
        f_star_estimated,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutcome { record: run.record, summary })
}

/// Sweep axis: which method parameter the value list varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Alpha,
    R,
    P,
}

/// Result of a sweep: per-value summaries in input order.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub runs: Vec<(f64, RunSummary)>,
}

fn method_with(axis: SweepAxis, base: &MethodSpec, value: f64) -> Result<MethodSpec> {
    match (axis, base) {
        (SweepAxis::Alpha, MethodSpec::Damped { r, .. }) => {
            Ok(MethodSpec::Damped { alpha: value, r: *r })
        }
        (SweepAxis::R, MethodSpec::Damped { alpha, .. }) => {
            Ok(MethodSpec::Damped { alpha: *alpha, r: value })
        }
        (SweepAxis::P, MethodSpec::Bregman { c, .. }) => Ok(MethodSpec::Bregman { p: value, c: *c }),
        _ => Err(Error::InvalidArgument(format!(
            "sweep axis {axis:?} does not apply to method {}",
            base.label()
        ))),
    }
}

/// Runs the base config once per value (shared seed and step policy) and
/// writes one long-form `value,n,t,f_gap` CSV for plotting. Per-value
/// divergence is recorded in the summaries, not raised.
pub fn sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    out: Option<&Path>,
) -> Result<SweepOutcome> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("sweep needs a nonempty value list".into()));
    }
    let mut combined: Vec<u8> = Vec::new();
    writeln!(combined, "value,n,t,f_gap")?;
    let mut runs = Vec::with_capacity(values.len());
    for &value in values {
        let config = ExperimentConfig {
            method: method_with(axis, &base.method, value)?,
            out: None,
            ..base.clone()
        };
        let outcome = run(&config)?;
        for row in &outcome.record.rows {
            writeln!(combined, "{},{},{},{}", value, row.n, row.t, row.f_gap)?;
        }
        runs.push((value, outcome.summary));
    }
    if let Some(path) = out {
        fs::write(path, &combined)?;
    }
    Ok(SweepOutcome { runs })
}

/// Iteration budget of the cached log-sum-exp reference run.
const F_STAR_ITERS: usize = 1_000_000;

/// Resolves `f*` for a log-sum-exp instance by a cached high-accuracy run
/// (damped `alpha = 0.8`, `r = 5`, [`F_STAR_ITERS`] iterations at half the
/// stability bound). The value is cached in `cache_dir` keyed by the
/// instance parameters.
pub fn resolve_f_star(dim: usize, m: usize, rho: f64, seed: u64, cache_dir: &Path) -> Result<f64> {
    let cache = cache_dir.join(format!("lse_fstar_d{dim}_m{m}_rho{rho}_seed{seed}.txt"));
    if let Ok(text) = fs::read_to_string(&cache) {
        if let Ok(v) = text.trim().parse::<f64>() {
            return Ok(v);
        }
    }
    let problem = make_log_sum_exp(dim, m, rho, seed)?;
    let params = DampedFlowParams::new(0.8, 5.0, 1.0)?;
    let h = 1.0 / problem.lipschitz.sqrt();
    let x0 = draw_x0(dim, seed);
    let initial = IntegratorState::start(x0, 1.0, SchemeTag::Velocity);
    let spec = RecordSpec { record_every: 1000, f_ref: None, lyapunov: None };
    let run = integrate(
        &problem,
        |p, s| step_damped_velocity(p, s, &params, h),
        initial,
        F_STAR_ITERS,
        &spec,
    )?;
    if run.diverged_at.is_some() {
        return Err(Error::InvalidArgument(format!(
            "reference run for f* diverged at iteration {:?}",
            run.diverged_at
        )));
    }
    // without a known minimum the f_gap column holds raw f values
    let f_star = run
        .record
        .rows
        .iter()
        .map(|r| r.f_gap)
        .fold(f64::INFINITY, f64::min);
    if !f_star.is_finite() {
        return Err(Error::InvalidArgument("reference run produced no finite values".into()));
    }
    if fs::create_dir_all(cache_dir).is_ok() {
        let _ = fs::write(&cache, format!("{f_star}\n"));
    }
    Ok(f_star)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quad_config(method: MethodSpec) -> ExperimentConfig {
        ExperimentConfig {
            problem: ProblemSpec::Quadratic {
                dim: 20,
                eig_min: 0.001,
                eig_max: 1.0,
                b_std: 5.0,
                seed: 7,
            },
            method,
            h: StepSize::Auto,
            n_iters: 1000,
            t0: 1.0,
            record_every: 10,
            out: None,
        }
    }

    #[test]
    fn nag_run_structural_checks() {
        let outcome = run(&quad_config(MethodSpec::Nag)).unwrap();
        let rows = &outcome.record.rows;
        assert_eq!(rows.len(), 101); // row 0 plus every 10th of 1000
        assert!(rows.windows(2).all(|w| w[1].t > w[0].t));
        assert!(!outcome.summary.diverged);
        assert!(outcome.summary.final_f_gap < rows[0].f_gap);
        assert_relative_eq!(outcome.summary.h_initial, 1.0, max_relative = 1e-12); // 1/L, L=1
        assert_eq!(outcome.summary.h_mode, "auto");
    }

    #[test]
    fn auto_step_for_damped_is_safety_times_bound() {
        // only the resolution is asserted: 0.999 of the bound is marginal
        // and the early damping transient can push modes outside it
        let outcome = run(&quad_config(MethodSpec::Damped { alpha: 0.6, r: 1.5 })).unwrap();
        assert_relative_eq!(outcome.summary.h_initial, 0.999 * 2.0, max_relative = 1e-12);
    }

    #[test]
    fn damped_fixed_step_converges_inside_bound() {
        let mut config = quad_config(MethodSpec::Damped { alpha: 0.6, r: 1.5 });
        config.h = StepSize::Fixed(0.5);
        config.n_iters = 20_000;
        let outcome = run(&config).unwrap();
        assert!(!outcome.summary.diverged);
        let rows = &outcome.record.rows;
        assert!(outcome.summary.final_f_gap < 1e-6 * rows[0].f_gap);
    }

    #[test]
    fn bregman_fixed_step_flags_divergence() {
        let mut config = quad_config(MethodSpec::Bregman { p: 3.0, c: None });
        config.h = StepSize::Fixed(1.0);
        config.n_iters = 100_000;
        let outcome = run(&config).unwrap();
        assert!(outcome.summary.diverged);
        assert!(outcome.summary.diverged_at.is_some());
        assert!(outcome.summary.iters_done < 100_000);
    }

    #[test]
    fn bregman_p2_fixed_step_stays_bounded() {
        // p = 2 has a time-independent bound sqrt(1/(C L)) = 2 at the
        // default C = 1/(4L); h = 1 sits well inside it
        let mut config = quad_config(MethodSpec::Bregman { p: 2.0, c: None });
        config.h = StepSize::Fixed(1.0);
        config.n_iters = 20_000;
        let outcome = run(&config).unwrap();
        assert!(!outcome.summary.diverged);
    }

    #[test]
    fn identical_configs_are_byte_identical() {
        let dir = std::env::temp_dir().join(format!("sympgrad-test-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let mut config = quad_config(MethodSpec::Damped { alpha: 0.6, r: 1.5 });
        config.out = Some(dir.join("a.csv"));
        run(&config).unwrap();
        let first = fs::read(dir.join("a.csv")).unwrap();
        config.out = Some(dir.join("b.csv"));
        run(&config).unwrap();
        let second = fs::read(dir.join("b.csv")).unwrap();
        assert!(!first.is_empty());
        assert_eq!(first, second);
        let header = String::from_utf8(first).unwrap();
        assert_eq!(header.lines().next().unwrap(), "n,t,f_gap,grad_norm,energy,lyapunov,step");
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn config_validation_rejections() {
        let mut config = quad_config(MethodSpec::Gd);
        config.n_iters = 0;
        assert!(run(&config).is_err());
        let mut config = quad_config(MethodSpec::Gd);
        config.h = StepSize::Fixed(-1.0);
        assert!(run(&config).is_err());
        let config = quad_config(MethodSpec::Damped { alpha: 1.5, r: 1.0 });
        assert!(run(&config).is_err());
    }

    #[test]
    fn nagsc_requires_strong_convexity() {
        let config = ExperimentConfig {
            problem: ProblemSpec::LogSumExp { dim: 5, m: 10, rho: 20.0, seed: 3 },
            ..quad_config(MethodSpec::NagSc)
        };
        assert!(run(&config).is_err());
    }

    #[test]
    fn sweep_structure_and_rejections() {
        let mut base = quad_config(MethodSpec::Damped { alpha: 0.6, r: 1.5 });
        base.h = StepSize::Fixed(0.5);
        assert!(sweep(&base, SweepAxis::R, &[], None).is_err());
        assert!(sweep(&quad_config(MethodSpec::Gd), SweepAxis::R, &[1.0], None).is_err());
        let dir = std::env::temp_dir().join(format!("sympgrad-sweep-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("sweep.csv");
        let outcome = sweep(&base, SweepAxis::R, &[0.5, 1.5, 5.0], Some(&path)).unwrap();
        assert_eq!(outcome.runs.len(), 3);
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "value,n,t,f_gap");
        // 3 runs x 101 rows + header
        assert_eq!(text.lines().count(), 3 * 101 + 1);
        assert!(text.lines().nth(1).unwrap().starts_with("0.5,0,"));
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn f_star_cache_roundtrip() {
        let dir = std::env::temp_dir().join(format!("sympgrad-fstar-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let first = resolve_f_star(5, 40, 20.0, 3, &dir).unwrap();
        assert!(dir.join("lse_fstar_d5_m40_rho20_seed3.txt").exists());
        let started = Instant::now();
        let second = resolve_f_star(5, 40, 20.0, 3, &dir).unwrap();
        assert!(started.elapsed().as_secs_f64() < 0.1, "cache not used");
        assert_eq!(first, second);
        // f* is a lower bound for f at random points
        let problem = make_log_sum_exp(5, 40, 20.0, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let x = DVector::from_fn(5, |_, _| rng.sample::<f64, _>(StandardNormal));
            assert!(problem.value(&x) >= first - 1e-9);
        }
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn f_star_matches_independent_long_run() {
        let dir = std::env::temp_dir().join(format!("sympgrad-fstar2-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let f_star = resolve_f_star(5, 40, 20.0, 4, &dir).unwrap();
        // independent oracle: NAG from a different start
        let problem = make_log_sum_exp(5, 40, 20.0, 4).unwrap();
        let h = 1.0 / problem.lipschitz;
        let mut s = IntegratorState::start(draw_x0(5, 12345), 1.0, SchemeTag::NagExtrapolation);
        for _ in 0..200_000 {
            s = step_nag(&problem, &s, h).unwrap();
        }
        let nag_val = problem.value(&s.x);
        assert_relative_eq!(nag_val, f_star, epsilon = 1e-6, max_relative = 1e-6);
        fs::remove_dir_all(&dir).ok();
    }
}
