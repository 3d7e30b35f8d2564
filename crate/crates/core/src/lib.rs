//! Accelerated gradient methods as symplectic integrators of damped
//! Hamiltonian flows.
//!
//! The central object is the `(alpha, r)`-damped system
//!
//! ```text
//! x'' + (r / t^alpha) x' + grad f(x) = 0
//! ```
//!
//! which interpolates between the continuous limits of Nesterov's method
//! for convex objectives (`alpha = 1`) and for strongly convex objectives
//! (`alpha = 0`). The crate provides:
//!
//! * [`problems`] — objective abstraction and seeded benchmark generators
//!   (random quadratics, log-sum-exp);
//! * [`schedules`] — the damping function `xi(t)`, its derivatives, and the
//!   polynomial-subfamily coefficients `a(t)`, `b(t)`;
//! * [`integrators`] — GD / NAG / NAG-SC steppers, the symplectic Euler
//!   splitting for time-dependent Hamiltonians, the overflow-safe velocity
//!   form, a fourth-order reference solver, and a symplecticity self-test;
//! * [`stability`] — 2x2 stability blocks, spectral radii and step-size
//!   bounds for the splitting scheme;
//! * [`lyapunov`] — Lyapunov certificates, the threshold polynomial `P`,
//!   convergence-rate envelopes, and trajectory monitors;
//! * [`bench`] — the experiment runner behind the `sympgrad-bench` CLI.

pub mod bench;
pub mod integrators;
pub mod lyapunov;
pub mod problems;
pub mod schedules;
pub mod stability;

mod error;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
