//! Benchmark CLI: single runs and parameter sweeps over the damped and
//! polynomial-family integrators against the gradient baselines.
//!
//! Output contract: trajectory CSV (`n,t,f_gap,grad_norm,energy,lyapunov,step`)
//! or sweep CSV (`value,n,t,f_gap`) to `--out`, and a `key=value` summary on
//! standard output.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use sympgrad::bench::{
    run, sweep, ExperimentConfig, MethodSpec, ProblemSpec, StepSize, SweepAxis,
};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProblemKind {
    Quadratic,
    Logsumexp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodKind {
    Gd,
    Nag,
    Nagsc,
    Damped,
    Bregman,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SweepAxisKind {
    Alpha,
    R,
    P,
}

#[derive(Debug, Parser)]
#[command(
    name = "sympgrad-bench",
    about = "Benchmark runner for damped-flow symplectic optimizers",
    version
)]
struct Cli {
    /// Objective family.
    #[arg(long, value_enum, default_value = "quadratic")]
    problem: ProblemKind,

    /// Problem dimension.
    #[arg(long, default_value_t = 500)]
    dim: usize,

    /// Instance seed (also seeds the start point on a separate stream).
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Smallest Hessian eigenvalue (quadratic).
    #[arg(long = "eig-min", default_value_t = 0.001)]
    eig_min: f64,

    /// Largest Hessian eigenvalue (quadratic).
    #[arg(long = "eig-max", default_value_t = 1.0)]
    eig_max: f64,

    /// Standard deviation of the linear term (quadratic).
    #[arg(long = "b-std", default_value_t = 5.0)]
    b_std: f64,

    /// Number of affine terms (logsumexp).
    #[arg(long, default_value_t = 200)]
    m: usize,

    /// Smoothing parameter (logsumexp).
    #[arg(long, default_value_t = 20.0)]
    rho: f64,

    /// Iteration to run.
    #[arg(long, value_enum, default_value = "damped")]
    method: MethodKind,

    /// Damping exponent (damped method).
    #[arg(long, default_value_t = 0.6)]
    alpha: f64,

    /// Damping strength (damped method).
    #[arg(long, default_value_t = 1.5)]
    r: f64,

    /// Polynomial exponent (bregman method).
    #[arg(long, default_value_t = 4.0)]
    p: f64,

    /// Polynomial scale C (bregman method); default 1/(L p^2).
    #[arg(long = "Cconst")]
    cconst: Option<f64>,

    /// Step size, or "auto" for 0.999x the stability bound.
    #[arg(long, default_value = "auto")]
    h: String,

    /// Iteration budget.
    #[arg(long, default_value_t = 100_000)]
    iters: usize,

    /// Integrator start time.
    #[arg(long, default_value_t = 1.0)]
    t0: f64,

    /// Record every k-th iteration.
    #[arg(long = "record-every", default_value_t = 100)]
    record_every: usize,

    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Sweep this method parameter over --values instead of a single run.
    #[arg(long, value_enum, requires = "values")]
    sweep: Option<SweepAxisKind>,

    /// Comma-separated value list for --sweep.
    #[arg(long, requires = "sweep")]
    values: Option<String>,
}

fn parse_step(text: &str) -> Result<StepSize, String> {
    if text.eq_ignore_ascii_case("auto") {
        return Ok(StepSize::Auto);
    }
    text.parse::<f64>()
        .map(StepSize::Fixed)
        .map_err(|_| format!("--h expects a number or \"auto\", got {text:?}"))
}

fn parse_values(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("bad sweep value {s:?}")))
        .collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: &Cli) -> Result<(), String> {
    let problem = match cli.problem {
        ProblemKind::Quadratic => ProblemSpec::Quadratic {
            dim: cli.dim,
            eig_min: cli.eig_min,
            eig_max: cli.eig_max,
            b_std: cli.b_std,
            seed: cli.seed,
        },
        ProblemKind::Logsumexp => ProblemSpec::LogSumExp {
            dim: cli.dim,
            m: cli.m,
            rho: cli.rho,
            seed: cli.seed,
        },
    };
    let method = match cli.method {
        MethodKind::Gd => MethodSpec::Gd,
        MethodKind::Nag => MethodSpec::Nag,
        MethodKind::Nagsc => MethodSpec::NagSc,
        MethodKind::Damped => MethodSpec::Damped { alpha: cli.alpha, r: cli.r },
        MethodKind::Bregman => MethodSpec::Bregman { p: cli.p, c: cli.cconst },
    };
    let config = ExperimentConfig {
        problem,
        method,
        h: parse_step(&cli.h)?,
        n_iters: cli.iters,
        t0: cli.t0,
        record_every: cli.record_every,
        out: cli.out.clone(),
    };
    match cli.sweep {
        None => {
            let outcome = run(&config).map_err(|e| e.to_string())?;
            outcome.summary.print();
        }
        Some(axis) => {
            let axis = match axis {
                SweepAxisKind::Alpha => SweepAxis::Alpha,
                SweepAxisKind::R => SweepAxis::R,
                SweepAxisKind::P => SweepAxis::P,
            };
            let values = parse_values(cli.values.as_deref().expect("clap enforces --values"))?;
            // the combined long-form CSV replaces the per-run trajectory file
            let base = ExperimentConfig { out: None, ..config };
            let outcome =
                sweep(&base, axis, &values, cli.out.as_deref()).map_err(|e| e.to_string())?;
            for (value, summary) in &outcome.runs {
                println!("sweep_value={value}");
                summary.print();
            }
        }
    }
    Ok(())
}
