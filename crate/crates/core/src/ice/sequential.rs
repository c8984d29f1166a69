//! The backwards sequential-regression algorithm: fit the final-time model,
//! predict under the plan, regress those predictions on the previous history,
//! and so on back to baseline; the estimate is the mean baseline prediction.

use super::glm::{fit_logistic, GlmError};
use super::system::IceSystem;
use crate::mest::EstimatingSystem;

#[derive(Debug, Clone, PartialEq)]
pub struct SequentialFit {
    /// `betas[k]` for the model of time `k`.
    pub betas: Vec<Vec<f64>>,
    pub mu: f64,
    /// Stacked parameter vector in the system's layout.
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("sequential model for time {time}: {source}")]
pub struct SequentialError {
    pub time: usize,
    pub source: GlmError,
}

/// Run the sequential fits for the system's plan and design.
pub fn sequential_fit(system: &IceSystem) -> Result<SequentialFit, SequentialError> {
    let tau = system.tau();
    let n = system.n_units();
    let mut betas = vec![Vec::new(); tau];
    // Y~*_{k+2} for the model at time k; starts as the observed final outcome
    let mut target: Vec<Option<f64>> = system.final_outcomes().to_vec();
    for k in (0..tau).rev() {
        let block = &system.blocks[k];
        let p = block.width();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            if block.fit[i] {
                x.extend_from_slice(block.x_fit.row(i).expect("fitting row present"));
                y.push(target[i].expect("target defined for fitting unit"));
            }
        }
        let beta = fit_logistic(&x, &y, p).map_err(|source| SequentialError { time: k, source })?;
        betas[k] = beta;
        let mut theta_k = vec![0.0; system.dim()];
        theta_k[system.beta_range(k)].copy_from_slice(&betas[k]);
        target = (0..n).map(|i| system.pseudo_at(k, i, &theta_k)).collect();
    }
    let mu = target
        .iter()
        .map(|t| t.expect("baseline prediction defined for every unit"))
        .sum::<f64>()
        / n as f64;
    let theta = system.pack(&betas, mu);
    Ok(SequentialFit { betas, mu, theta })
}
