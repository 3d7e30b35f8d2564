//! Objective-function abstraction and seeded benchmark generators.
//!
//! All randomness flows through `ChaCha8Rng::seed_from_u64`, so every
//! generated instance is reproducible bit-for-bit per seed on a given
//! platform.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

type ValueFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type GradientFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// A differentiable convex objective with value/gradient evaluators and the
/// constants the analysis needs.
///
/// Immutable after construction; evaluation is safe from concurrent
/// contexts.
#[derive(Clone)]
pub struct ObjectiveProblem {
    pub dim: usize,
    value: ValueFn,
    gradient: GradientFn,
    /// Cancellation-free evaluator of `f(x) - f*`, when the problem admits
    /// one (quadratics with a known minimizer). Falls back to
    /// `value(x) - min_value` otherwise.
    gap_fn: Option<ValueFn>,
    pub lipschitz: f64,
    pub strong_mu: Option<f64>,
    pub minimizer: Option<DVector<f64>>,
    pub min_value: Option<f64>,
}

impl std::fmt::Debug for ObjectiveProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ObjectiveProblem")
            .field("dim", &self.dim)
            .field("lipschitz", &self.lipschitz)
            .field("strong_mu", &self.strong_mu)
            .field("min_value", &self.min_value)
            .finish()
    }
}

impl ObjectiveProblem {
    pub fn new(dim: usize, value: ValueFn, gradient: GradientFn, lipschitz: f64) -> Self {
        Self {
            dim,
            value,
            gradient,
            gap_fn: None,
            lipschitz,
            strong_mu: None,
            minimizer: None,
            min_value: None,
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.gradient)(x)
    }

    /// `f(x) - f*` against the problem's own minimum, or against
    /// `f_ref` when the minimum is only known externally.
    pub fn f_gap(&self, x: &DVector<f64>, f_ref: Option<f64>) -> Option<f64> {
        if let Some(g) = &self.gap_fn {
            return Some(g(x));
        }
        self.min_value.or(f_ref).map(|fs| self.value(x) - fs)
    }

    /// Replaces the stored minimum with an externally estimated value.
    pub fn with_min_value(mut self, f_star: f64) -> Self {
        self.min_value = Some(f_star);
        self
    }
}

/// Maximum relative error over coordinates between a central finite
/// difference of the value and the analytic gradient component.
pub fn grad_check(problem: &ObjectiveProblem, x: &DVector<f64>, fd_step: f64) -> Result<f64> {
    if !(fd_step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "fd_step must be positive, got {fd_step}"
        )));
    }
    let g = problem.gradient(x);
    let mut worst = 0.0f64;
    let mut xp = x.clone();
    for i in 0..problem.dim {
        let xi = x[i];
        xp[i] = xi + fd_step;
        let hi = problem.value(&xp);
        xp[i] = xi - fd_step;
        let lo = problem.value(&xp);
        xp[i] = xi;
        let fd = (hi - lo) / (2.0 * fd_step);
        let err = (fd - g[i]).abs() / (1.0 + g[i].abs());
        worst = worst.max(err);
    }
    Ok(worst)
}

fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize, std: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| std * rng.sample::<f64, _>(StandardNormal))
}

fn spd_solve_refined(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("matrix is not positive definite".into()))?;
    let mut x = chol.solve(rhs);
    // One step of iterative refinement keeps the residual near roundoff
    // even for condition numbers around 1e3.
    let resid = a * &x - rhs;
    x -= chol.solve(&resid);
    Ok(x)
}

fn quadratic_problem(
    a: DMatrix<f64>,
    b: DVector<f64>,
    eig_min: f64,
    eig_max: f64,
) -> Result<ObjectiveProblem> {
    let dim = a.nrows();
    let minimizer = spd_solve_refined(&a, &(-&b))?;
    let residual = (&a * &minimizer + &b).norm();
    if residual > 1e-8 {
        return Err(Error::InvalidArgument(format!(
            "linear solve for the minimizer left residual {residual:.3e}"
        )));
    }
    let min_value = 0.5 * (&a * &minimizer).dot(&minimizer) + b.dot(&minimizer);

    let (av, bv) = (a.clone(), b.clone());
    let value: ValueFn = Arc::new(move |x| 0.5 * (&av * x).dot(x) + bv.dot(x));
    let (ag, bg) = (a.clone(), b);
    let gradient: GradientFn = Arc::new(move |x| &ag * x + &bg);
    let (agap, xstar) = (a, minimizer.clone());
    let gap_fn: ValueFn = Arc::new(move |x| {
        let z = x - &xstar;
        0.5 * (&agap * &z).dot(&z)
    });

    Ok(ObjectiveProblem {
        dim,
        value,
        gradient,
        gap_fn: Some(gap_fn),
        lipschitz: eig_max,
        strong_mu: Some(eig_min),
        minimizer: Some(minimizer),
        min_value: Some(min_value),
    })
}

/// Random strongly convex quadratic `f(x) = x'Ax/2 + b'x` with a controlled
/// spectrum.
///
/// `A = Q' D Q` with `Q` the orthonormalization of a seeded Gaussian matrix
/// and `D` uniform in `[eig_min, eig_max]` except `D_1 = eig_min`,
/// `D_2 = eig_max`, pinning `mu` and `L` exactly. The minimizer solves
/// `A x* = -b` at construction.
pub fn make_quadratic(
    dim: usize,
    eig_min: f64,
    eig_max: f64,
    b_std: f64,
    seed: u64,
) -> Result<ObjectiveProblem> {
    check_spectrum(dim, eig_min, eig_max)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let d = spectrum(&mut rng, dim, eig_min, eig_max);
    let a = q.transpose() * DMatrix::from_diagonal(&d) * &q;
    // Symmetrize away the roundoff of the triple product.
    let a = (&a + a.transpose()) * 0.5;
    let b = gaussian_vector(&mut rng, dim, b_std);
    quadratic_problem(a, b, eig_min, eig_max)
}

/// Diagonal representative of the [`make_quadratic`] ensemble.
///
/// Orthogonal conjugation leaves every gradient method considered here
/// equivariant, so trajectories of `f(x) = x'Dx/2 + b'x` are statistically
/// identical to the dense instance while gradients cost O(dim).
pub fn make_diagonal_quadratic(
    dim: usize,
    eig_min: f64,
    eig_max: f64,
    b_std: f64,
    seed: u64,
) -> Result<ObjectiveProblem> {
    check_spectrum(dim, eig_min, eig_max)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spectrum(&mut rng, dim, eig_min, eig_max);
    let b = gaussian_vector(&mut rng, dim, b_std);
    let minimizer = DVector::from_fn(dim, |i, _| -b[i] / d[i]);
    let min_value = (0..dim)
        .map(|i| 0.5 * d[i] * minimizer[i] * minimizer[i] + b[i] * minimizer[i])
        .sum();
    let (dv, bv) = (d.clone(), b.clone());
    let value: ValueFn =
        Arc::new(move |x| x.iter().enumerate().map(|(i, &xi)| 0.5 * dv[i] * xi * xi + bv[i] * xi).sum());
    let (dg, bg) = (d.clone(), b);
    let gradient: GradientFn = Arc::new(move |x| DVector::from_fn(x.len(), |i, _| dg[i] * x[i] + bg[i]));
    let (dgap, xstar) = (d, minimizer.clone());
    let gap_fn: ValueFn = Arc::new(move |x| {
        x.iter()
            .enumerate()
            .map(|(i, &xi)| {
                let z = xi - xstar[i];
                0.5 * dgap[i] * z * z
            })
            .sum()
    });
    Ok(ObjectiveProblem {
        dim,
        value,
        gradient,
        gap_fn: Some(gap_fn),
        lipschitz: eig_max,
        strong_mu: Some(eig_min),
        minimizer: Some(minimizer),
        min_value: Some(min_value),
    })
}

fn check_spectrum(dim: usize, eig_min: f64, eig_max: f64) -> Result<()> {
    if dim < 2 {
        return Err(Error::InvalidArgument(format!("dim must be >= 2, got {dim}")));
    }
    if !(eig_min > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eig_min must be positive, got {eig_min}"
        )));
    }
    if eig_min > eig_max {
        return Err(Error::InvalidArgument(format!(
            "eig_min {eig_min} exceeds eig_max {eig_max}"
        )));
    }
    Ok(())
}

fn spectrum(rng: &mut ChaCha8Rng, dim: usize, eig_min: f64, eig_max: f64) -> DVector<f64> {
    let mut d = DVector::from_fn(dim, |_, _| rng.gen_range(eig_min..=eig_max));
    d[0] = eig_min;
    d[1] = eig_max;
    d
}

/// Quadratic `f(x) = x' M^-1 x / 2` with `m_ij = decay^|i-j|`, the test
/// matrix of the fixed-step blow-up experiment (`decay = 0.9`, `dim = 50`).
pub fn make_kms_quadratic(dim: usize, decay: f64) -> Result<ObjectiveProblem> {
    if dim < 2 {
        return Err(Error::InvalidArgument(format!("dim must be >= 2, got {dim}")));
    }
    if !(decay > 0.0 && decay < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "decay must be in (0, 1), got {decay}"
        )));
    }
    let m = DMatrix::from_fn(dim, dim, |i, j| decay.powi((i as i32 - j as i32).abs()));
    let eigs = m.clone().symmetric_eigen().eigenvalues;
    let lam_min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    let lam_max = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let minv = m
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("correlation matrix is not SPD".into()))?
        .inverse();
    let minv = (&minv + minv.transpose()) * 0.5;

    let av = minv.clone();
    let value: ValueFn = Arc::new(move |x| 0.5 * (&av * x).dot(x));
    let ag = minv.clone();
    let gradient: GradientFn = Arc::new(move |x| &ag * x);
    let agap = minv;
    let gap_fn: ValueFn = Arc::new(move |x| 0.5 * (&agap * x).dot(x));

    Ok(ObjectiveProblem {
        dim,
        value,
        gradient,
        gap_fn: Some(gap_fn),
        lipschitz: 1.0 / lam_min,
        strong_mu: Some(1.0 / lam_max),
        minimizer: Some(DVector::zeros(dim)),
        min_value: Some(0.0),
    })
}

/// Log-sum-exp data `f(x) = rho * log sum_i exp((a_i'x - b_i)/rho)`.
#[derive(Debug, Clone)]
pub struct LogSumExp {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub rho: f64,
}

impl LogSumExp {
    /// Seeded instance: `A` i.i.d. standard Gaussian, `b` Gaussian with
    /// standard deviation sqrt(2).
    pub fn random(dim: usize, m: usize, rho: f64, seed: u64) -> Result<Self> {
        if m < 1 || dim < 1 {
            return Err(Error::InvalidArgument(
                "dim and m must both be at least 1".into(),
            ));
        }
        if !(rho > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "rho must be positive, got {rho}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(m, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = gaussian_vector(&mut rng, m, 2.0f64.sqrt());
        Ok(Self { a, b, rho })
    }

    /// Scaled scores `(Ax - b)/rho` shifted by their maximum, so the
    /// exponentials never overflow.
    fn shifted_scores(&self, x: &DVector<f64>) -> (DVector<f64>, f64) {
        let mut s = (&self.a * x - &self.b) / self.rho;
        let smax = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        s.add_scalar_mut(-smax);
        (s, smax)
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let (s, smax) = self.shifted_scores(x);
        let sum: f64 = s.iter().map(|v| v.exp()).sum();
        self.rho * (smax + sum.ln())
    }

    /// Softmax weights of the shifted scores; nonnegative, summing to one.
    pub fn softmax(&self, x: &DVector<f64>) -> DVector<f64> {
        let (s, _) = self.shifted_scores(x);
        let mut w = s.map(|v| v.exp());
        let sum: f64 = w.iter().sum();
        w /= sum;
        w
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.a.transpose() * self.softmax(x)
    }

    /// `sigma_max(A)^2 / rho`, the standard smoothness bound, with the top
    /// singular value estimated by power iteration to relative tolerance
    /// 1e-8.
    pub fn lipschitz(&self) -> f64 {
        let n = self.a.ncols();
        let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
        let mut sigma2 = 0.0f64;
        for _ in 0..10_000 {
            let w = self.a.transpose() * (&self.a * &v);
            let new_sigma2 = w.norm();
            v = w / new_sigma2;
            if (new_sigma2 - sigma2).abs() <= 1e-8 * new_sigma2 {
                sigma2 = new_sigma2;
                break;
            }
            sigma2 = new_sigma2;
        }
        sigma2 / self.rho
    }
}

/// Smooth convex (not strongly convex) benchmark objective. The minimum is
/// not known in closed form; the runner estimates it downstream and injects
/// it via [`ObjectiveProblem::with_min_value`].
pub fn make_log_sum_exp(dim: usize, m: usize, rho: f64, seed: u64) -> Result<ObjectiveProblem> {
    let lse = LogSumExp::random(dim, m, rho, seed)?;
    let lipschitz = lse.lipschitz();
    let lv = lse.clone();
    let value: ValueFn = Arc::new(move |x| lv.value(x));
    let lg = lse;
    let gradient: GradientFn = Arc::new(move |x| lg.gradient(x));
    Ok(ObjectiveProblem::new(dim, value, gradient, lipschitz))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random_point(dim: usize, seed: u64, scale: f64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        gaussian_vector(&mut rng, dim, scale)
    }

    #[test]
    fn identity_quadratic_has_zero_minimizer() {
        let p = make_quadratic(2, 1.0, 1.0, 0.0, 7).unwrap();
        let x = DVector::from_vec(vec![1.0, 0.0]);
        assert_relative_eq!(p.value(&x), 0.5);
        assert_relative_eq!(p.gradient(&x), x, epsilon = 1e-12);
        assert_relative_eq!(p.minimizer.as_ref().unwrap().norm(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(p.min_value.unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn quadratic_pins_spectrum_and_residual() {
        for seed in 0..5 {
            let p = make_quadratic(20, 0.001, 1.0, 5.0, seed).unwrap();
            assert_eq!(p.lipschitz, 1.0);
            assert_eq!(p.strong_mu, Some(0.001));
            let xs = p.minimizer.as_ref().unwrap();
            // Residual of the linear solve, via the gradient at x*.
            assert!(p.gradient(xs).norm() <= 1e-8 * (1.0 + p.lipschitz));
        }
    }

    #[test]
    fn quadratic_rejects_bad_inputs() {
        assert!(make_quadratic(1, 0.1, 1.0, 1.0, 0).is_err());
        assert!(make_quadratic(5, 0.0, 1.0, 1.0, 0).is_err());
        assert!(make_quadratic(5, 2.0, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn quadratic_gradient_passes_fd_check() {
        let p = make_quadratic(8, 0.1, 2.0, 3.0, 11).unwrap();
        for seed in 0..5 {
            let x = random_point(8, 100 + seed, 2.0);
            assert!(grad_check(&p, &x, 1e-6).unwrap() < 1e-7);
        }
    }

    #[test]
    fn grad_check_identity_case() {
        let p = make_quadratic(2, 1.0, 1.0, 0.0, 0).unwrap();
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let err = grad_check(&p, &x, 1e-6).unwrap();
        assert!(err < 1e-7);
        assert!(err >= 0.0);
        assert!(grad_check(&p, &x, 0.0).is_err());
    }

    #[test]
    fn diagonal_quadratic_matches_contract() {
        let p = make_diagonal_quadratic(50, 0.001, 1.0, 5.0, 3).unwrap();
        assert_eq!(p.lipschitz, 1.0);
        let x = random_point(50, 9, 1.0);
        assert!(grad_check(&p, &x, 1e-6).unwrap() < 1e-7);
        // gap evaluator agrees with f - f* where cancellation permits
        let gap = p.f_gap(&x, None).unwrap();
        let direct = p.value(&x) - p.min_value.unwrap();
        assert_relative_eq!(gap, direct, max_relative = 1e-6);
    }

    #[test]
    fn strong_convexity_lower_bound_sampled() {
        let p = make_quadratic(10, 0.05, 1.0, 2.0, 5).unwrap();
        let mu = p.strong_mu.unwrap();
        for seed in 0..20 {
            let x = random_point(10, 200 + seed, 3.0);
            let y = random_point(10, 300 + seed, 3.0);
            let d = &y - &x;
            let lhs = p.value(&y) - p.value(&x) - p.gradient(&x).dot(&d);
            let rhs = 0.5 * mu * d.norm_squared() - 1e-9 * (1.0 + d.norm_squared());
            assert!(lhs >= rhs);
        }
    }

    #[test]
    fn convexity_sampled_combinations() {
        let q = make_quadratic(6, 0.1, 1.0, 1.0, 2).unwrap();
        let l = make_log_sum_exp(6, 30, 5.0, 2).unwrap();
        for problem in [&q, &l] {
            for seed in 0..100u64 {
                let x = random_point(6, 1000 + seed, 2.0);
                let y = random_point(6, 2000 + seed, 2.0);
                for &lam in &[0.25, 0.5, 0.75] {
                    let z = &x * lam + &y * (1.0 - lam);
                    let lhs = problem.value(&z);
                    let rhs = lam * problem.value(&x) + (1.0 - lam) * problem.value(&y);
                    assert!(lhs <= rhs + 1e-9 * (1.0 + problem.value(&x).abs() + problem.value(&y).abs()));
                }
            }
        }
    }

    #[test]
    fn kms_quadratic_basics() {
        let p = make_kms_quadratic(50, 0.9).unwrap();
        assert_relative_eq!(p.min_value.unwrap(), 0.0);
        let x = random_point(50, 4, 1.0);
        assert!(grad_check(&p, &x, 1e-6).unwrap() < 1e-6);
        // KMS eigenvalues lie in [(1-d)/(1+d), (1+d)/(1-d)]
        assert!(p.lipschitz >= 1.0 && p.lipschitz <= (1.9f64 / 0.1) * 1.01);
        assert!(p.strong_mu.unwrap() <= 1.0);
    }

    #[test]
    fn log_sum_exp_single_term_is_affine() {
        let lse = LogSumExp::random(4, 1, 2.0, 9).unwrap();
        let x = random_point(4, 5, 1.0);
        let a0 = lse.a.row(0).transpose();
        assert_relative_eq!(lse.value(&x), a0.dot(&x) - lse.b[0], max_relative = 1e-12);
        assert_relative_eq!(lse.gradient(&x), a0, epsilon = 1e-12);
    }

    #[test]
    fn log_sum_exp_softmax_is_a_distribution() {
        let lse = LogSumExp::random(10, 40, 3.0, 1).unwrap();
        for seed in 0..10 {
            // Large-scale points exercise the max-subtraction path.
            let x = random_point(10, 600 + seed, 50.0);
            let w = lse.softmax(&x);
            assert!(w.iter().all(|&v| v >= 0.0));
            assert_relative_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn log_sum_exp_reference_instance_grad_check() {
        // The benchmark instance: d = 50, m = 200, rho = 20.
        let p = make_log_sum_exp(50, 200, 20.0, 0).unwrap();
        for seed in 0..20u64 {
            let x = random_point(50, 700 + seed, 2.0);
            let step = 1e-6 * (1.0 + x.norm());
            assert!(grad_check(&p, &x, step).unwrap() < 1e-5);
        }
        assert!(p.strong_mu.is_none());
        assert!(p.min_value.is_none());
    }

    #[test]
    fn log_sum_exp_lipschitz_matches_direct_svd() {
        let lse = LogSumExp::random(8, 20, 2.5, 3).unwrap();
        let sigma = lse.a.clone().svd(false, false).singular_values[0];
        assert_relative_eq!(lse.lipschitz(), sigma * sigma / 2.5, max_relative = 1e-6);
    }

    #[test]
    fn log_sum_exp_rejects_nonpositive_rho() {
        assert!(LogSumExp::random(4, 4, 0.0, 0).is_err());
        assert!(make_log_sum_exp(4, 4, -1.0, 0).is_err());
    }

    #[test]
    fn generators_are_deterministic_per_seed() {
        let a = make_quadratic(6, 0.1, 1.0, 2.0, 42).unwrap();
        let b = make_quadratic(6, 0.1, 1.0, 2.0, 42).unwrap();
        let x = random_point(6, 8, 1.0);
        assert_eq!(a.value(&x), b.value(&x));
        assert_eq!(a.minimizer, b.minimizer);
        let l1 = LogSumExp::random(5, 12, 2.0, 42).unwrap();
        let l2 = LogSumExp::random(5, 12, 2.0, 42).unwrap();
        assert_eq!(l1.a, l2.a);
        assert_eq!(l1.b, l2.b);
    }
}
