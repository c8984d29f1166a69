use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgm::{generate_with_rng, substream, true_value, COVARIATE};
use crate::data::{DesignSpec, Term, TreatmentPlan};
use crate::ice::{estimate, IceConfig};
use crate::mest::SolveConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Unstratified,
    Stratified,
}

impl Estimator {
    pub fn label(self) -> &'static str {
        match self {
            Estimator::Unstratified => "unstratified",
            Estimator::Stratified => "stratified",
        }
    }
}

/// Design matrices used in the study:
/// `X_0 = (1, A0, L0)`, `X_1 = (1, A0, A1, L0, L1)`, `X_2 = (1, A1, A2, L1, L2)`.
/// The stratified estimator drops the treatment columns.
pub fn study_design_specs() -> Vec<DesignSpec> {
    let l = |time| Term::Covariate {
        time,
        name: COVARIATE.to_string(),
    };
    let a = |time| Term::Treatment { time };
    vec![
        DesignSpec::new(vec![Term::Intercept, a(0), l(0)]),
        DesignSpec::new(vec![Term::Intercept, a(0), a(1), l(0), l(1)]),
        DesignSpec::new(vec![Term::Intercept, a(1), a(2), l(1), l(2)]),
    ]
}

pub fn study_config(estimator: Estimator) -> IceConfig {
    IceConfig::new(study_design_specs()).stratified(estimator == Estimator::Stratified)
}

pub const DEFAULT_TRUTH_SAMPLE: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    pub iterations: usize,
    pub plan: TreatmentPlan,
    pub estimator: Estimator,
    pub seed: u64,
    #[serde(default = "default_truth_sample")]
    pub truth_sample: usize,
}

fn default_truth_sample() -> usize {
    DEFAULT_TRUTH_SAMPLE
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n == 0 {
            return Err("n must be at least 1".into());
        }
        if self.iterations == 0 {
            return Err("iterations must be at least 1".into());
        }
        if self.truth_sample == 0 {
            return Err("truth_sample must be at least 1".into());
        }
        match self.plan {
            TreatmentPlan::Always | TreatmentPlan::Never => Ok(()),
            _ => Err("simulation plans are 'always' or 'never'".into()),
        }
    }
}

/// Outcome of a single simulated analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub mu_hat: f64,
    pub se: f64,
    pub covers: bool,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioMetrics {
    pub n: usize,
    pub estimator: Estimator,
    pub plan: String,
    pub truth: f64,
    pub bias: Option<f64>,
    pub ese: Option<f64>,
    pub ase: Option<f64>,
    pub ser: Option<f64>,
    pub coverage: Option<f64>,
    pub failed: usize,
    pub iterations: usize,
}

/// Summarise iteration records; failed iterations are excluded from every metric.
pub fn summarize(
    records: &[IterationRecord],
    truth: f64,
    n: usize,
    estimator: Estimator,
    plan: &TreatmentPlan,
) -> ScenarioMetrics {
    let ok: Vec<&IterationRecord> = records.iter().filter(|r| r.converged).collect();
    let m = ok.len();
    let mean = |f: &dyn Fn(&IterationRecord) -> f64| {
        (m > 0).then(|| ok.iter().map(|r| f(r)).sum::<f64>() / m as f64)
    };
    let mean_mu = mean(&|r| r.mu_hat);
    let ese = mean_mu.filter(|_| m >= 2).map(|mu| {
        (ok.iter().map(|r| (r.mu_hat - mu).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt()
    });
    let ase = mean(&|r| r.se);
    let ser = match (ase, ese) {
        (Some(a), Some(e)) if e > 0.0 => Some(a / e),
        _ => None,
    };
    ScenarioMetrics {
        n,
        estimator,
        plan: plan.label(),
        truth,
        bias: mean_mu.map(|mu| mu - truth),
        ese,
        ase,
        ser,
        coverage: mean(&|r| if r.covers { 1.0 } else { 0.0 }),
        failed: records.len() - m,
        iterations: records.len(),
    }
}

/// One simulated analysis; iteration `i` draws from stream `i + 1` of the seed.
pub fn run_iteration(config: &ScenarioConfig, iteration: usize, truth: f64) -> IterationRecord {
    let mut rng = substream(config.seed, iteration as u64 + 1);
    let data = generate_with_rng(config.n, &mut rng);
    let res = estimate(
        &data,
        &config.plan,
        &study_config(config.estimator),
        &SolveConfig::default(),
        0.95,
    )
    .expect("study configuration is valid for generated data");
    IterationRecord {
        mu_hat: res.mu_hat,
        se: res.se,
        covers: res.converged && res.ci_lower <= truth && truth <= res.ci_upper,
        converged: res.converged,
    }
}

/// Iteration records in index order, computed on the current rayon pool.
pub fn run_iterations(config: &ScenarioConfig, truth: f64) -> Vec<IterationRecord> {
    (0..config.iterations)
        .into_par_iter()
        .map(|i| run_iteration(config, i, truth))
        .collect()
}

/// Run the study with the Monte Carlo truth computed from `config.truth_sample` draws.
pub fn run_study(config: &ScenarioConfig) -> Result<ScenarioMetrics, String> {
    config.validate()?;
    let truth = true_value(&config.plan, config.truth_sample, config.seed);
    Ok(run_study_with_truth(config, truth))
}

/// Run the study against a known truth.
pub fn run_study_with_truth(config: &ScenarioConfig, truth: f64) -> ScenarioMetrics {
    let records = run_iterations(config, truth);
    summarize(&records, truth, config.n, config.estimator, &config.plan)
}
