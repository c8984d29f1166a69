//! ICE g-computation estimating systems.
//!
//! Parameters are stacked as `theta = (beta_{tau-1}, beta_{tau-2}, ..., beta_0, mu)`.
//! For `k = tau-1, ..., 0` the block for `beta_k` is
//!
//! ```text
//! I(C_{k+1} = 0 [, A_bar_k = a*_bar_k]) { Z_{k+1} - expit(X_k' beta_k) } X_k
//! ```
//!
//! with `Z_tau = Y_tau` and `Z_{k+1} = Y~*_{k+2}` otherwise, where the
//! pseudo-outcome `Y~*_{k+1} = expit(X*_k' beta_k)` is defined for every unit
//! uncensored at `k`. The final component is `Y~*_1 - mu`.

use serde::{Deserialize, Serialize};

use super::link::Link;
use super::IceError;
use crate::data::{
    design_matrix, followers_mask, DesignMatrix, DesignSpec, LongitudinalDataset, TreatmentPlan,
};
use crate::mest::EstimatingSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    #[default]
    RepeatedMeasures,
    TimeToEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IceConfig {
    /// Fit each sequential model only among units following the plan.
    #[serde(default)]
    pub stratified: bool,
    #[serde(default)]
    pub outcome_kind: OutcomeKind,
    /// `design_specs[k]` defines `X_k`, `k = 0..tau-1`.
    pub design_specs: Vec<DesignSpec>,
    #[serde(default)]
    pub link: Link,
}

impl IceConfig {
    pub fn new(design_specs: Vec<DesignSpec>) -> Self {
        Self {
            stratified: false,
            outcome_kind: OutcomeKind::RepeatedMeasures,
            design_specs,
            link: Link::Logit,
        }
    }

    pub fn stratified(mut self, yes: bool) -> Self {
        self.stratified = yes;
        self
    }

    pub fn outcome_kind(mut self, kind: OutcomeKind) -> Self {
        self.outcome_kind = kind;
        self
    }
}

/// Everything about one time step that does not depend on theta.
#[derive(Debug, Clone)]
pub(crate) struct TimeBlock {
    /// `X_k` over observed treatment (restricted to the fitting units).
    pub x_fit: DesignMatrix,
    /// `X*_k` under the plan, for units uncensored at `k`.
    pub x_plan: DesignMatrix,
    /// Units contributing to the score for `beta_k`.
    pub fit: Vec<bool>,
    /// Time-to-event: `Y_k = 1`, so `Y~*_{k+1} = 1`.
    pub carry: Vec<bool>,
    pub offset: usize,
}

impl TimeBlock {
    pub fn width(&self) -> usize {
        self.x_fit.n_cols()
    }
}

/// Stacked ICE estimating functions for one plan.
#[derive(Debug, Clone)]
pub struct IceSystem {
    n: usize,
    tau: usize,
    dim: usize,
    link: Link,
    final_outcome: Vec<Option<f64>>,
    pub(crate) blocks: Vec<TimeBlock>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl IceSystem {
    /// Build the system selected by `config` (stratification and outcome kind).
    pub fn new(
        dataset: &LongitudinalDataset,
        plan: &TreatmentPlan,
        config: &IceConfig,
    ) -> Result<Self, IceError> {
        let tau = dataset.tau();
        if config.design_specs.len() != tau {
            return Err(IceError::DimensionMismatch {
                expected: tau,
                got: config.design_specs.len(),
            });
        }
        plan.check(tau).map_err(IceError::InvalidPlan)?;
        if config.stratified && plan.is_natural_course() {
            return Err(IceError::InvalidPlan(
                "stratification requires a deterministic plan, not the natural course".into(),
            ));
        }
        let survival = config.outcome_kind == OutcomeKind::TimeToEvent;
        if survival {
            check_events_absorbing(dataset)?;
        }

        let mut blocks = Vec::with_capacity(tau);
        for k in 0..tau {
            let spec = if config.stratified {
                config.design_specs[k].without_treatment()
            } else {
                config.design_specs[k].clone()
            };
            let x_fit = design_matrix(dataset, k, &spec, None)?;
            let x_plan = design_matrix(dataset, k, &spec, Some(plan))?;
            let followers = config.stratified.then(|| followers_mask(dataset, plan, k));
            let fit = dataset
                .units()
                .iter()
                .enumerate()
                .map(|(i, u)| !u.censored_at(k + 1) && followers.as_ref().map_or(true, |f| f[i]))
                .collect();
            let carry = dataset
                .units()
                .iter()
                .map(|u| survival && k >= 1 && u.outcome_at(k) == Some(1.0))
                .collect();
            blocks.push(TimeBlock {
                x_fit,
                x_plan,
                fit,
                carry,
                offset: 0,
            });
        }
        let mut offset = 0;
        for k in (0..tau).rev() {
            blocks[k].offset = offset;
            offset += blocks[k].width();
        }
        let final_outcome = dataset.units().iter().map(|u| u.outcome_at(tau)).collect();
        Ok(Self {
            n: dataset.n(),
            tau,
            dim: offset + 1,
            link: config.link,
            final_outcome,
            blocks,
        })
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    /// Index of `mu` in theta (always the last entry).
    pub fn mu_index(&self) -> usize {
        self.dim - 1
    }

    /// Position and length of `beta_k` inside theta.
    pub fn beta_range(&self, k: usize) -> std::ops::Range<usize> {
        let b = &self.blocks[k];
        b.offset..b.offset + b.width()
    }

    /// Number of units in the fitting set of each time model.
    pub fn fit_counts(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .map(|b| b.fit.iter().filter(|f| **f).count())
            .collect()
    }

    pub(crate) fn pseudo_at(&self, k: usize, unit: usize, theta: &[f64]) -> Option<f64> {
        let b = &self.blocks[k];
        let x = b.x_plan.row(unit)?;
        if b.carry[unit] {
            return Some(1.0);
        }
        Some(self.link.inverse(dot(x, &theta[self.beta_range(k)])))
    }

    /// Pseudo-outcomes `Y~*_{k+1}` at `theta`, indexed `[k][unit]`; `None` where undefined.
    pub fn pseudo_outcomes(&self, theta: &[f64]) -> Vec<Vec<Option<f64>>> {
        (0..self.tau)
            .map(|k| (0..self.n).map(|i| self.pseudo_at(k, i, theta)).collect())
            .collect()
    }

    /// Split theta into `(beta_0, ..., beta_{tau-1})` and `mu`.
    pub fn unpack(&self, theta: &[f64]) -> (Vec<Vec<f64>>, f64) {
        let betas = (0..self.tau)
            .map(|k| theta[self.beta_range(k)].to_vec())
            .collect();
        (betas, theta[self.mu_index()])
    }

    /// Inverse of [`IceSystem::unpack`].
    pub fn pack(&self, betas: &[Vec<f64>], mu: f64) -> Vec<f64> {
        let mut theta = vec![0.0; self.dim];
        for (k, b) in betas.iter().enumerate() {
            theta[self.beta_range(k)].copy_from_slice(b);
        }
        theta[self.mu_index()] = mu;
        theta
    }

    pub(crate) fn final_outcomes(&self) -> &[Option<f64>] {
        &self.final_outcome
    }

    /// Cold start: `beta = 0`, `mu = 0.5`.
    pub fn cold_start(&self) -> Vec<f64> {
        let mut theta = vec![0.0; self.dim];
        theta[self.mu_index()] = 0.5;
        theta
    }
}

fn check_events_absorbing(dataset: &LongitudinalDataset) -> Result<(), IceError> {
    for (i, u) in dataset.units().iter().enumerate() {
        let mut event = false;
        for k in 1..=dataset.tau() {
            match u.outcome_at(k) {
                Some(y) if event && y != 1.0 => {
                    return Err(IceError::EventNonMonotone { unit: i, time: k })
                }
                Some(y) if y == 1.0 => event = true,
                Some(y) if y != 0.0 => {
                    return Err(IceError::InvalidPlan(format!(
                        "time-to-event outcome must be binary (unit {i}, time {k})"
                    )))
                }
                _ => {}
            }
        }
    }
    Ok(())
}

impl EstimatingSystem for IceSystem {
    fn n_units(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn psi(&self, unit: usize, theta: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        // pseudo-outcome from the later model, Y~*_{k+2}
        let mut later: Option<f64> = None;
        for k in (0..self.tau).rev() {
            let b = &self.blocks[k];
            if b.fit[unit] {
                let target = if k + 1 == self.tau {
                    self.final_outcome[unit]
                } else {
                    later
                }
                .expect("outcome defined for fitting unit");
                let x = b.x_fit.row(unit).expect("row present for fitting unit");
                let beta = &theta[b.offset..b.offset + x.len()];
                let resid = target - self.link.inverse(dot(x, beta));
                for (o, xj) in out[b.offset..b.offset + x.len()].iter_mut().zip(x) {
                    *o = resid * xj;
                }
            }
            later = self.pseudo_at(k, unit, theta);
        }
        let mu = self.mu_index();
        out[mu] = later.expect("baseline pseudo-outcome defined for every unit") - theta[mu];
    }
}

/// Two plan systems plus `(mu_a - mu_b) - mu_d`.
#[derive(Debug, Clone)]
pub struct StackedContrastSystem {
    pub plan_a: IceSystem,
    pub plan_b: IceSystem,
}

impl StackedContrastSystem {
    pub fn new(
        dataset: &LongitudinalDataset,
        plan_a: &TreatmentPlan,
        plan_b: &TreatmentPlan,
        config: &IceConfig,
    ) -> Result<Self, IceError> {
        Ok(Self {
            plan_a: IceSystem::new(dataset, plan_a, config)?,
            plan_b: IceSystem::new(dataset, plan_b, config)?,
        })
    }

    /// Offset of the second plan's parameters.
    pub fn b_offset(&self) -> usize {
        self.plan_a.dim
    }

    pub fn mu_a_index(&self) -> usize {
        self.plan_a.mu_index()
    }

    pub fn mu_b_index(&self) -> usize {
        self.b_offset() + self.plan_b.mu_index()
    }

    pub fn difference_index(&self) -> usize {
        self.plan_a.dim + self.plan_b.dim
    }
}

impl EstimatingSystem for StackedContrastSystem {
    fn n_units(&self) -> usize {
        self.plan_a.n
    }

    fn dim(&self) -> usize {
        self.plan_a.dim + self.plan_b.dim + 1
    }

    fn psi(&self, unit: usize, theta: &[f64], out: &mut [f64]) {
        let (va, vb) = (self.plan_a.dim, self.plan_b.dim);
        self.plan_a.psi(unit, &theta[..va], &mut out[..va]);
        self.plan_b
            .psi(unit, &theta[va..va + vb], &mut out[va..va + vb]);
        let d = va + vb;
        out[d] = (theta[self.mu_a_index()] - theta[self.mu_b_index()]) - theta[d];
    }
}

/// All uncensored units contribute to every score block; repeated-measures outcome.
pub fn build_unstratified_system(
    dataset: &LongitudinalDataset,
    plan: &TreatmentPlan,
    config: &IceConfig,
) -> Result<IceSystem, IceError> {
    let cfg = config
        .clone()
        .stratified(false)
        .outcome_kind(OutcomeKind::RepeatedMeasures);
    IceSystem::new(dataset, plan, &cfg)
}

/// Each score block restricted to units that followed the plan; treatment terms dropped.
pub fn build_stratified_system(
    dataset: &LongitudinalDataset,
    plan: &TreatmentPlan,
    config: &IceConfig,
) -> Result<IceSystem, IceError> {
    let cfg = config
        .clone()
        .stratified(true)
        .outcome_kind(OutcomeKind::RepeatedMeasures);
    IceSystem::new(dataset, plan, &cfg)
}

/// Time-to-event variant with carry-forward of observed events; honours `config.stratified`.
pub fn build_survival_system(
    dataset: &LongitudinalDataset,
    plan: &TreatmentPlan,
    config: &IceConfig,
) -> Result<IceSystem, IceError> {
    let cfg = config.clone().outcome_kind(OutcomeKind::TimeToEvent);
    IceSystem::new(dataset, plan, &cfg)
}

pub fn build_stacked_contrast_system(
    dataset: &LongitudinalDataset,
    plan_a: &TreatmentPlan,
    plan_b: &TreatmentPlan,
    config: &IceConfig,
) -> Result<StackedContrastSystem, IceError> {
    StackedContrastSystem::new(dataset, plan_a, plan_b, config)
}
