//! General M-estimation engine.
//!
//! An [`EstimatingSystem`] supplies a per-unit estimating function `psi(i, theta)`.
//! [`solve_estimating_equations`] finds the root of the summed estimating
//! equations with a damped Newton-Raphson iteration driven by a central
//! finite-difference Jacobian, and [`sandwich`] assembles the empirical sandwich
//! covariance `B^-1 F B^-T` at the root.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// A stack of per-unit estimating functions sharing one parameter vector.
///
/// Implementations must be deterministic for a fixed `(unit, theta)` and always
/// write exactly `dim()` values.
pub trait EstimatingSystem: Sync {
    fn n_units(&self) -> usize;

    fn dim(&self) -> usize;

    fn psi(&self, unit: usize, theta: &[f64], out: &mut [f64]);

    /// Sum of `psi` over all units.
    fn psi_sum(&self, theta: &[f64]) -> Vec<f64> {
        let v = self.dim();
        let mut total = vec![0.0; v];
        let mut buf = vec![0.0; v];
        for i in 0..self.n_units() {
            self.psi(i, theta, &mut buf);
            for (t, b) in total.iter_mut().zip(&buf) {
                *t += b;
            }
        }
        total
    }
}

impl<T: EstimatingSystem + ?Sized> EstimatingSystem for &T {
    fn n_units(&self) -> usize {
        (**self).n_units()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn psi(&self, unit: usize, theta: &[f64], out: &mut [f64]) {
        (**self).psi(unit, theta, out)
    }
    fn psi_sum(&self, theta: &[f64]) -> Vec<f64> {
        (**self).psi_sum(theta)
    }
}

impl<T: EstimatingSystem + ?Sized> EstimatingSystem for Box<T> {
    fn n_units(&self) -> usize {
        (**self).n_units()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn psi(&self, unit: usize, theta: &[f64], out: &mut [f64]) {
        (**self).psi(unit, theta, out)
    }
    fn psi_sum(&self, theta: &[f64]) -> Vec<f64> {
        (**self).psi_sum(theta)
    }
}

/// Why the root finder gave up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureReason {
    /// Tolerance not reached within `max_iterations`.
    IterationCap,
    /// The step-halving line search could not reduce the residual.
    Stalled,
    /// At least one estimating equation is identically zero around theta,
    /// so its parameters are not identified.
    DegenerateEquations,
}

impl std::fmt::Display for FailureReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FailureReason::IterationCap => write!(f, "iteration cap reached"),
            FailureReason::Stalled => write!(f, "line search stalled"),
            FailureReason::DegenerateEquations => {
                write!(f, "estimating equations identically zero")
            }
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MestError {
    #[error("parameter vector has length {got}, system expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("estimating system has no units")]
    EmptySystem,
    #[error(
        "no root found after {iterations} iterations ({reason}); residual max-norm {residual:e}"
    )]
    ConvergenceFailure {
        iterations: usize,
        residual: f64,
        reason: FailureReason,
    },
    #[error("Newton step could not be computed at iteration {iteration}: Jacobian is singular")]
    SingularJacobian { iteration: usize },
    #[error("estimating function returned a non-finite value")]
    NonFiniteEvaluation,
    #[error("bread matrix is numerically singular (reciprocal condition number {rcond:e})")]
    SingularBread { rcond: f64 },
}

impl MestError {
    /// True for outcomes that count as "failed to find the root".
    pub fn is_convergence_failure(&self) -> bool {
        matches!(
            self,
            MestError::ConvergenceFailure { .. } | MestError::SingularJacobian { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub max_iterations: usize,
    /// Tolerance on the max-norm of the mean estimating equation.
    pub root_tolerance: f64,
    /// Finite-difference step is `fd_relative_step * max(fd_step_floor, |theta_j|)`.
    pub fd_relative_step: f64,
    pub fd_step_floor: f64,
    /// Maximum number of step halvings per Newton iteration.
    pub max_halvings: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            root_tolerance: 1e-9,
            fd_relative_step: 1e-6,
            fd_step_floor: 1.0,
            max_halvings: 40,
        }
    }
}

impl SolveConfig {
    fn step(&self, x: f64) -> f64 {
        self.fd_relative_step * x.abs().max(self.fd_step_floor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub theta: Vec<f64>,
    pub iterations: usize,
    /// Max-norm of the mean estimating equation at `theta`.
    pub residual: f64,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn mean_psi<S: EstimatingSystem + ?Sized>(
    system: &S,
    theta: &[f64],
) -> Result<Vec<f64>, MestError> {
    let n = system.n_units() as f64;
    let mut total = system.psi_sum(theta);
    if total.iter().any(|x| !x.is_finite()) {
        return Err(MestError::NonFiniteEvaluation);
    }
    for t in &mut total {
        *t /= n;
    }
    Ok(total)
}

fn check_input<S: EstimatingSystem + ?Sized>(system: &S, theta: &[f64]) -> Result<(), MestError> {
    if system.n_units() == 0 {
        return Err(MestError::EmptySystem);
    }
    if theta.len() != system.dim() {
        return Err(MestError::DimensionMismatch {
            expected: system.dim(),
            got: theta.len(),
        });
    }
    Ok(())
}

/// Compensated (Neumaier) summation.
#[derive(Debug, Clone, Copy, Default)]
struct NeumaierSum {
    sum: f64,
    carry: f64,
}

impl NeumaierSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Central finite-difference Jacobian of the summed estimating function.
///
/// Entry `(r, c)` approximates `d/d theta_c sum_i psi_r(O_i; theta)`.
pub fn numerical_jacobian<S: EstimatingSystem + ?Sized>(
    system: &S,
    theta: &[f64],
    config: &SolveConfig,
) -> Result<DMatrix<f64>, MestError> {
    check_input(system, theta)?;
    if theta.iter().any(|x| !x.is_finite()) {
        return Err(MestError::NonFiniteEvaluation);
    }
    let v = theta.len();
    let mut jac = DMatrix::zeros(v, v);
    let mut work = theta.to_vec();
    let mut up = vec![0.0; v];
    let mut down = vec![0.0; v];
    let mut sums = vec![NeumaierSum::default(); v];
    for c in 0..v {
        let h = config.step(theta[c]);
        let (hi, lo) = (theta[c] + h, theta[c] - h);
        // the realised spacing, not 2h, since theta +- h is rounded
        let span = hi - lo;
        sums.iter_mut().for_each(|s| *s = NeumaierSum::default());
        // differencing unit by unit keeps the cancellation out of the running sum
        for i in 0..system.n_units() {
            work[c] = hi;
            system.psi(i, &work, &mut up);
            work[c] = lo;
            system.psi(i, &work, &mut down);
            for r in 0..v {
                sums[r].add(up[r] - down[r]);
            }
        }
        work[c] = theta[c];
        for r in 0..v {
            let d = sums[r].value() / span;
            if !d.is_finite() {
                return Err(MestError::NonFiniteEvaluation);
            }
            jac[(r, c)] = d;
        }
    }
    Ok(jac)
}

/// True when some Jacobian row is exactly zero: that equation carries no
/// information about theta, so no root is identified.
fn degenerate_rows(jac: &DMatrix<f64>) -> bool {
    (0..jac.nrows()).any(|r| jac.row(r).iter().all(|x| *x == 0.0))
}

/// Solve `sum_i psi(O_i; theta) = 0` by damped Newton-Raphson.
///
/// Each iteration takes the full Newton step and halves it until the max-norm
/// of the mean estimating equation decreases.
pub fn solve_estimating_equations<S: EstimatingSystem + ?Sized>(
    system: &S,
    theta_init: &[f64],
    config: &SolveConfig,
) -> Result<Solution, MestError> {
    check_input(system, theta_init)?;
    let n = system.n_units() as f64;
    let mut theta = theta_init.to_vec();
    let mut f = mean_psi(system, &theta)?;
    let mut residual = max_abs(&f);

    for iteration in 0..config.max_iterations {
        let jac = numerical_jacobian(system, &theta, config)? / n;
        if degenerate_rows(&jac) {
            return Err(MestError::ConvergenceFailure {
                iterations: iteration,
                residual,
                reason: FailureReason::DegenerateEquations,
            });
        }
        if residual <= config.root_tolerance {
            return Ok(Solution {
                theta,
                iterations: iteration,
                residual,
            });
        }
        let rhs = -DVector::from_column_slice(&f);
        let step = jac
            .lu()
            .solve(&rhs)
            .filter(|s| s.iter().all(|x| x.is_finite()))
            .ok_or(MestError::SingularJacobian { iteration })?;

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            let trial: Vec<f64> = theta
                .iter()
                .zip(step.iter())
                .map(|(t, s)| t + scale * s)
                .collect();
            if let Ok(f_trial) = mean_psi(system, &trial) {
                let r_trial = max_abs(&f_trial);
                if r_trial < residual {
                    accepted = Some((trial, f_trial, r_trial));
                    break;
                }
            }
            scale *= 0.5;
        }
        match accepted {
            Some((t, ft, rt)) => {
                theta = t;
                f = ft;
                residual = rt;
            }
            None => {
                return Err(MestError::ConvergenceFailure {
                    iterations: iteration + 1,
                    residual,
                    reason: FailureReason::Stalled,
                })
            }
        }
    }
    if residual <= config.root_tolerance {
        return Ok(Solution {
            theta,
            iterations: config.max_iterations,
            residual,
        });
    }
    Err(MestError::ConvergenceFailure {
        iterations: config.max_iterations,
        residual,
        reason: FailureReason::IterationCap,
    })
}

/// `B_n = -(1/n) d/d theta sum_i psi(O_i; theta)`.
pub fn bread<S: EstimatingSystem + ?Sized>(
    system: &S,
    theta_hat: &[f64],
    config: &SolveConfig,
) -> Result<DMatrix<f64>, MestError> {
    let n = system.n_units() as f64;
    Ok(numerical_jacobian(system, theta_hat, config)? / -n)
}

/// `F_n = (1/n) sum_i psi psi^T`, symmetric bit-for-bit.
pub fn meat<S: EstimatingSystem + ?Sized>(
    system: &S,
    theta_hat: &[f64],
) -> Result<DMatrix<f64>, MestError> {
    check_input(system, theta_hat)?;
    let v = system.dim();
    let n = system.n_units();
    let mut acc = DMatrix::<f64>::zeros(v, v);
    let mut buf = vec![0.0; v];
    for i in 0..n {
        system.psi(i, theta_hat, &mut buf);
        if buf.iter().any(|x| !x.is_finite()) {
            return Err(MestError::NonFiniteEvaluation);
        }
        for r in 0..v {
            if buf[r] == 0.0 {
                continue;
            }
            for c in r..v {
                acc[(r, c)] += buf[r] * buf[c];
            }
        }
    }
    let nf = n as f64;
    for r in 0..v {
        for c in r..v {
            let val = acc[(r, c)] / nf;
            acc[(r, c)] = val;
            acc[(c, r)] = val;
        }
    }
    Ok(acc)
}

/// Bread, meat, sandwich covariance and standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichResult {
    pub bread: DMatrix<f64>,
    pub meat: DMatrix<f64>,
    /// Asymptotic covariance `V_n = B^-1 F B^-T` (not yet divided by n).
    pub covariance: DMatrix<f64>,
    /// `sqrt(diag(V_n) / n)`.
    pub standard_errors: Vec<f64>,
}

/// Reciprocal 2-norm condition number.
pub fn reciprocal_condition(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if max == 0.0 || !max.is_finite() {
        0.0
    } else {
        min / max
    }
}

pub const SINGULAR_RCOND: f64 = 1e-12;

/// Combine bread and meat into the sandwich covariance for a sample of `n` units.
pub fn sandwich_variance(
    bread: DMatrix<f64>,
    meat: DMatrix<f64>,
    n: usize,
) -> Result<SandwichResult, MestError> {
    let v = bread.nrows();
    let rcond = reciprocal_condition(&bread);
    if !(rcond >= SINGULAR_RCOND) {
        return Err(MestError::SingularBread { rcond });
    }
    let lu = bread.clone().lu();
    // X = B^-1 F, then V = B^-1 X^T = B^-1 F^T B^-T = B^-1 F B^-T
    let left = lu.solve(&meat).ok_or(MestError::SingularBread { rcond })?;
    let cov_t = lu
        .solve(&left.transpose())
        .ok_or(MestError::SingularBread { rcond })?;
    let mut covariance = DMatrix::zeros(v, v);
    for r in 0..v {
        for c in 0..v {
            covariance[(r, c)] = 0.5 * (cov_t[(r, c)] + cov_t[(c, r)]);
        }
    }
    let scale = covariance
        .diagonal()
        .iter()
        .fold(0.0_f64, |m, x| m.max(x.abs()));
    let standard_errors = (0..v)
        .map(|j| {
            let d = covariance[(j, j)];
            if d >= 0.0 {
                (d / n as f64).sqrt()
            } else if d.abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
                // rounding residue of an exactly-zero variance
                0.0
            } else {
                f64::NAN
            }
        })
        .collect();
    Ok(SandwichResult {
        bread,
        meat,
        covariance,
        standard_errors,
    })
}

/// Bread, meat and sandwich in one call.
pub fn sandwich<S: EstimatingSystem + ?Sized>(
    system: &S,
    theta_hat: &[f64],
    config: &SolveConfig,
) -> Result<SandwichResult, MestError> {
    let b = bread(system, theta_hat, config)?;
    let f = meat(system, theta_hat)?;
    sandwich_variance(b, f, system.n_units())
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Wald interval `estimate +- z_{(1+level)/2} * se`.
pub fn wald_ci(estimate: f64, se: f64, level: f64) -> (f64, f64) {
    assert!(
        level > 0.0 && level < 1.0,
        "confidence level must lie in (0, 1)"
    );
    if se == 0.0 {
        return (estimate, estimate);
    }
    let z = normal_quantile(0.5 * (1.0 + level));
    (estimate - z * se, estimate + z * se)
}

/// Root plus sandwich for one system.
#[derive(Debug, Clone)]
pub struct MEstimate {
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub sandwich: SandwichResult,
}

/// Solve and compute the sandwich covariance at the root.
pub fn m_estimate<S: EstimatingSystem + ?Sized>(
    system: &S,
    theta_init: &[f64],
    config: &SolveConfig,
) -> Result<MEstimate, MestError> {
    let sol = solve_estimating_equations(system, theta_init, config)?;
    let sandwich = sandwich(system, &sol.theta, config)?;
    Ok(MEstimate {
        theta: sol.theta,
        iterations: sol.iterations,
        residual: sol.residual,
        sandwich,
    })
}
