//! Simulation study: data-generating mechanism, true values and performance metrics.

mod dgm;
mod study;

pub use dgm::{
    exact_true_value, generate, generate_with_rng, substream, true_value, DgmDraw, COVARIATE,
};
pub use study::{
    run_iteration, run_iterations, run_study, run_study_with_truth, study_config,
    study_design_specs, summarize, Estimator, IterationRecord, ScenarioConfig, ScenarioMetrics,
    DEFAULT_TRUTH_SAMPLE,
};
