//! End-to-end estimation: build, warm-start from the sequential fit, solve,
//! then sandwich variance and Wald interval.

use std::fmt;

use nalgebra::DMatrix;
use serde::Serialize;

use super::glm::GlmError;
use super::sequential::{sequential_fit, SequentialError, SequentialFit};
use super::system::{IceConfig, IceSystem, StackedContrastSystem};
use super::IceError;
use crate::data::{LongitudinalDataset, TreatmentPlan};
use crate::mest::{self, EstimatingSystem, MestError, SolveConfig};

/// Why an estimate has no valid root or variance.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimationFailure {
    /// Nobody contributes to the score of the model at `time`.
    EmptyStratum {
        time: usize,
    },
    /// A sequential outcome model's design is rank deficient in its fitting set.
    RankDeficient {
        time: usize,
    },
    Solver(MestError),
}

impl fmt::Display for EstimationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimationFailure::EmptyStratum { time } => {
                write!(f, "no units in the fitting set of the time-{time} model")
            }
            EstimationFailure::RankDeficient { time } => {
                write!(f, "rank-deficient design in the time-{time} outcome model")
            }
            EstimationFailure::Solver(e) => write!(f, "{e}"),
        }
    }
}

impl EstimationFailure {
    /// Sequential errors that rule out a root; `None` leaves the decision to the solver.
    fn from_sequential(e: SequentialError) -> Option<Self> {
        let time = e.time;
        match e.source {
            GlmError::Empty => Some(EstimationFailure::EmptyStratum { time }),
            GlmError::RankDeficient => Some(EstimationFailure::RankDeficient { time }),
            GlmError::Separation | GlmError::NotConverged => None,
        }
    }
}

/// Coefficients of each time model and the plan mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IceTheta {
    /// `beta[k]` for the model of time `k`.
    pub beta: Vec<Vec<f64>>,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub mu_hat: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub level: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Max-norm of the mean estimating equation at the reported theta.
    pub residual: f64,
    pub theta: Option<IceTheta>,
    /// Sandwich covariance of theta (divided by n).
    pub covariance: Option<Vec<Vec<f64>>>,
    pub failure: Option<String>,
    /// Diagnostics that did not prevent a root, such as separation in a warm-start fit.
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub failure_kind: Option<EstimationFailure>,
}

impl EstimateResult {
    fn failed(
        failure: EstimationFailure,
        level: f64,
        iterations: usize,
        warnings: Vec<String>,
    ) -> Self {
        Self {
            mu_hat: f64::NAN,
            se: f64::NAN,
            ci_lower: f64::NAN,
            ci_upper: f64::NAN,
            level,
            converged: false,
            iterations,
            residual: f64::NAN,
            theta: None,
            covariance: None,
            failure: Some(failure.to_string()),
            warnings,
            failure_kind: Some(failure),
        }
    }

    pub fn ci(&self) -> (f64, f64) {
        (self.ci_lower, self.ci_upper)
    }
}

fn scaled_covariance(cov: &DMatrix<f64>, n: usize) -> Vec<Vec<f64>> {
    (0..cov.nrows())
        .map(|r| (0..cov.ncols()).map(|c| cov[(r, c)] / n as f64).collect())
        .collect()
}

/// Starting values for the solver.
struct Start {
    theta: Vec<f64>,
    /// The sequential fit is already the root.
    exact: Option<f64>,
    warnings: Vec<String>,
}

/// Warm start from the sequential fit; a cold start with a warning when that
/// fit diverges or stalls, or a reportable failure.
fn initial_theta(system: &IceSystem) -> Result<Start, EstimationFailure> {
    if let Some(time) = system.fit_counts().iter().position(|c| *c == 0) {
        return Err(EstimationFailure::EmptyStratum { time });
    }
    match sequential_fit(system) {
        Ok(SequentialFit { theta, mu, .. }) => Ok(Start {
            theta,
            exact: Some(mu),
            warnings: Vec::new(),
        }),
        Err(e) => match EstimationFailure::from_sequential(e) {
            Some(f) => Err(f),
            None => Ok(Start {
                theta: system.cold_start(),
                exact: None,
                warnings: vec![format!("{e}; solving from a cold start")],
            }),
        },
    }
}

/// Point estimate only, through the sequential regressions (no root finding, no sandwich).
pub fn point_estimate(
    dataset: &LongitudinalDataset,
    plan: &TreatmentPlan,
    config: &IceConfig,
) -> Result<Result<f64, EstimationFailure>, IceError> {
    let system = IceSystem::new(dataset, plan, config)?;
    Ok(point_estimate_system(&system, &SolveConfig::default()))
}

/// Sequential point estimate, or the solver's root when the sequential fit diverges.
pub fn point_estimate_system(
    system: &IceSystem,
    solve: &SolveConfig,
) -> Result<f64, EstimationFailure> {
    let start = initial_theta(system)?;
    if let Some(mu) = start.exact {
        return Ok(mu);
    }
    mest::solve_estimating_equations(system, &start.theta, solve)
        .map(|sol| sol.theta[system.mu_index()])
        .map_err(EstimationFailure::Solver)
}

/// Estimate the mean outcome under `plan` with sandwich standard error and Wald interval.
///
/// Configuration and data errors are returned as `Err`; numerical failures
/// (empty strata, rank deficiency, no root, singular bread) come back as a result
/// with `converged == false`.
pub fn estimate(
    dataset: &LongitudinalDataset,
    plan: &TreatmentPlan,
    config: &IceConfig,
    solve: &SolveConfig,
    level: f64,
) -> Result<EstimateResult, IceError> {
    let system = IceSystem::new(dataset, plan, config)?;
    Ok(estimate_system(&system, solve, level))
}

/// [`estimate`] on an already-built system.
pub fn estimate_system(system: &IceSystem, solve: &SolveConfig, level: f64) -> EstimateResult {
    let start = match initial_theta(system) {
        Ok(s) => s,
        Err(f) => return EstimateResult::failed(f, level, 0, Vec::new()),
    };
    let fit = match mest::m_estimate(system, &start.theta, solve) {
        Ok(f) => f,
        Err(e) => {
            let iterations = match &e {
                MestError::ConvergenceFailure { iterations, .. } => *iterations,
                _ => 0,
            };
            return EstimateResult::failed(
                EstimationFailure::Solver(e),
                level,
                iterations,
                start.warnings,
            );
        }
    };
    let mu_idx = system.mu_index();
    let mu_hat = fit.theta[mu_idx];
    let se = fit.sandwich.standard_errors[mu_idx];
    let (ci_lower, ci_upper) = mest::wald_ci(mu_hat, se, level);
    let (beta, mu) = system.unpack(&fit.theta);
    EstimateResult {
        mu_hat,
        se,
        ci_lower,
        ci_upper,
        level,
        converged: true,
        iterations: fit.iterations,
        residual: fit.residual,
        theta: Some(IceTheta { beta, mu }),
        covariance: Some(scaled_covariance(
            &fit.sandwich.covariance,
            system.n_units(),
        )),
        failure: None,
        warnings: start.warnings,
        failure_kind: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContrastSummary {
    pub estimate: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

impl ContrastSummary {
    fn nan() -> Self {
        Self {
            estimate: f64::NAN,
            se: f64::NAN,
            ci_lower: f64::NAN,
            ci_upper: f64::NAN,
        }
    }

    fn new(estimate: f64, se: f64, level: f64) -> Self {
        let (ci_lower, ci_upper) = mest::wald_ci(estimate, se, level);
        Self {
            estimate,
            se,
            ci_lower,
            ci_upper,
        }
    }
}

/// Joint inference for two plans and their difference `mu_a - mu_b`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContrastResult {
    pub plan_a: ContrastSummary,
    pub plan_b: ContrastSummary,
    pub difference: ContrastSummary,
    pub level: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub failure: Option<String>,
    pub warnings: Vec<String>,
}

impl ContrastResult {
    fn failed(
        failure: EstimationFailure,
        level: f64,
        iterations: usize,
        warnings: Vec<String>,
    ) -> Self {
        Self {
            plan_a: ContrastSummary::nan(),
            plan_b: ContrastSummary::nan(),
            difference: ContrastSummary::nan(),
            level,
            converged: false,
            iterations,
            residual: f64::NAN,
            failure: Some(failure.to_string()),
            warnings,
        }
    }
}

/// Solve the stacked two-plan system with the difference equation appended.
pub fn estimate_contrast(
    dataset: &LongitudinalDataset,
    plan_a: &TreatmentPlan,
    plan_b: &TreatmentPlan,
    config: &IceConfig,
    solve: &SolveConfig,
    level: f64,
) -> Result<ContrastResult, IceError> {
    let system = StackedContrastSystem::new(dataset, plan_a, plan_b, config)?;
    Ok(estimate_contrast_system(&system, solve, level))
}

pub fn estimate_contrast_system(
    system: &StackedContrastSystem,
    solve: &SolveConfig,
    level: f64,
) -> ContrastResult {
    let start_a = match initial_theta(&system.plan_a) {
        Ok(s) => s,
        Err(f) => return ContrastResult::failed(f, level, 0, Vec::new()),
    };
    let start_b = match initial_theta(&system.plan_b) {
        Ok(s) => s,
        Err(f) => return ContrastResult::failed(f, level, 0, start_a.warnings),
    };
    let mut warnings = start_a.warnings;
    warnings.extend(start_b.warnings);
    let mut init = start_a.theta;
    init.extend(start_b.theta);
    init.push(init[system.mu_a_index()] - init[system.mu_b_index()]);
    let fit = match mest::m_estimate(system, &init, solve) {
        Ok(f) => f,
        Err(e) => {
            let iterations = match &e {
                MestError::ConvergenceFailure { iterations, .. } => *iterations,
                _ => 0,
            };
            return ContrastResult::failed(
                EstimationFailure::Solver(e),
                level,
                iterations,
                warnings,
            );
        }
    };
    let se = &fit.sandwich.standard_errors;
    let at = |j: usize| ContrastSummary::new(fit.theta[j], se[j], level);
    ContrastResult {
        plan_a: at(system.mu_a_index()),
        plan_b: at(system.mu_b_index()),
        difference: at(system.difference_index()),
        level,
        converged: true,
        iterations: fit.iterations,
        residual: fit.residual,
        failure: None,
        warnings,
    }
}
