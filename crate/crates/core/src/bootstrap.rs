//! Nonparametric bootstrap over units.
//!
//! Resample `r` draws its indices from stream `r` of the seed, so results do not
//! depend on the number of workers or their scheduling.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{LongitudinalDataset, TreatmentPlan};
use crate::ice::{point_estimate, IceConfig, IceError};
use crate::mest::wald_ci;
use crate::simulation::substream;

/// Largest tolerated fraction of failed resamples.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapCi {
    Normal,
    Percentile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_ci")]
    pub ci: BootstrapCi,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_resamples() -> usize {
    500
}
fn default_workers() -> usize {
    1
}
fn default_ci() -> BootstrapCi {
    BootstrapCi::Normal
}
fn default_level() -> f64 {
    0.95
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: default_resamples(),
            seed: 0,
            workers: default_workers(),
            ci: default_ci(),
            level: default_level(),
        }
    }
}

#[derive(Debug, Error)]
pub enum BootstrapError {
    #[error("bootstrap needs at least 2 resamples, got {0}")]
    TooFewResamples(usize),
    #[error("workers must be at least 1")]
    NoWorkers,
    #[error("{failed} of {resamples} resamples failed (limit {limit:.0}%)", limit = MAX_FAILURE_FRACTION * 100.0)]
    TooManyFailures { failed: usize, resamples: usize },
    #[error("could not build worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Ice(#[from] IceError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    pub estimate: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub level: f64,
    pub ci: BootstrapCi,
    /// Successful resample estimates in resample order.
    pub estimates: Vec<f64>,
    pub failures: usize,
    pub resamples: usize,
    pub workers: usize,
    pub wall_time_seconds: f64,
}

/// Indices for resample `r` of an `n`-unit dataset.
pub fn resample_indices(n: usize, seed: u64, r: usize) -> Vec<usize> {
    let mut rng = substream(seed, r as u64);
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bootstrap any statistic that may fail; `statistic` returns `None` on failure.
///
/// `estimate` is the full-sample value used to centre the normal interval.
pub fn bootstrap_statistic<F>(
    dataset: &LongitudinalDataset,
    estimate: f64,
    config: &BootstrapConfig,
    statistic: F,
) -> Result<BootstrapResult, BootstrapError>
where
    F: Fn(&LongitudinalDataset) -> Option<f64> + Sync,
{
    if config.resamples < 2 {
        return Err(BootstrapError::TooFewResamples(config.resamples));
    }
    if config.workers == 0 {
        return Err(BootstrapError::NoWorkers);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| BootstrapError::Pool(e.to_string()))?;
    let start = Instant::now();
    let n = dataset.n();
    let values: Vec<Option<f64>> = pool.install(|| {
        (0..config.resamples)
            .into_par_iter()
            .map(|r| {
                let idx = resample_indices(n, config.seed, r);
                statistic(&dataset.resample(&idx)).filter(|v| v.is_finite())
            })
            .collect()
    });
    let wall_time_seconds = start.elapsed().as_secs_f64();

    let estimates: Vec<f64> = values.iter().flatten().copied().collect();
    let failures = config.resamples - estimates.len();
    if failures as f64 > MAX_FAILURE_FRACTION * config.resamples as f64 || estimates.len() < 2 {
        return Err(BootstrapError::TooManyFailures {
            failed: failures,
            resamples: config.resamples,
        });
    }
    let m = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / m;
    let se = (estimates.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    let (ci_lower, ci_upper) = match config.ci {
        BootstrapCi::Normal => wald_ci(estimate, se, config.level),
        BootstrapCi::Percentile => {
            let mut sorted = estimates.clone();
            sorted.sort_by(f64::total_cmp);
            let alpha = 1.0 - config.level;
            (
                percentile(&sorted, alpha / 2.0),
                percentile(&sorted, 1.0 - alpha / 2.0),
            )
        }
    };
    Ok(BootstrapResult {
        estimate,
        se,
        ci_lower,
        ci_upper,
        level: config.level,
        ci: config.ci,
        estimates,
        failures,
        resamples: config.resamples,
        workers: config.workers,
        wall_time_seconds,
    })
}

/// Bootstrap of the plan mean using the sequential point estimator.
pub fn bootstrap_estimate(
    dataset: &LongitudinalDataset,
    plan: &TreatmentPlan,
    ice: &IceConfig,
    config: &BootstrapConfig,
) -> Result<BootstrapResult, BootstrapError> {
    let full = point_estimate(dataset, plan, ice)?.unwrap_or(f64::NAN);
    bootstrap_statistic(dataset, full, config, |d| {
        point_estimate(d, plan, ice).ok()?.ok()
    })
}

/// Bootstrap of `mu_a - mu_b`; a resample fails if either plan fails.
pub fn bootstrap_contrast(
    dataset: &LongitudinalDataset,
    plan_a: &TreatmentPlan,
    plan_b: &TreatmentPlan,
    ice: &IceConfig,
    config: &BootstrapConfig,
) -> Result<BootstrapResult, BootstrapError> {
    let diff = |d: &LongitudinalDataset| -> Result<Option<f64>, IceError> {
        let a = point_estimate(d, plan_a, ice)?;
        let b = point_estimate(d, plan_b, ice)?;
        Ok(match (a, b) {
            (Ok(a), Ok(b)) => Some(a - b),
            _ => None,
        })
    };
    let full = diff(dataset)?.unwrap_or(f64::NAN);
    bootstrap_statistic(dataset, full, config, |d| diff(d).ok().flatten())
}
