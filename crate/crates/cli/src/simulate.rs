use std::time::Instant;

use serde::Serialize;

use gcomp_core::simulation::{run_study_with_truth, true_value, ScenarioConfig, ScenarioMetrics};

use crate::config::{Common, Format, SimulateSection};
use crate::error::CliError;
use crate::output;

/// Worker count is omitted: results do not depend on it.
#[derive(Serialize)]
struct Resolved<'a> {
    command: &'static str,
    seed: u64,
    simulate: &'a SimulateSection,
}

#[derive(Serialize)]
struct Document<'a> {
    config: Resolved<'a>,
    results: &'a [ScenarioMetrics],
}

/// Every scenario shares the seed, so estimators and plans are compared on the same datasets.
pub fn run(common: &Common, sim: &SimulateSection) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.workers)
        .build()
        .map_err(|e| CliError::Runtime(format!("could not build worker pool: {e}")))?;
    let truths: Vec<f64> = sim
        .plans
        .iter()
        .map(|p| true_value(p, sim.truth_sample, common.seed))
        .collect();
    let mut results = Vec::new();
    for &n in &sim.n {
        for &estimator in &sim.estimators {
            for (plan, &truth) in sim.plans.iter().zip(&truths) {
                let cfg = ScenarioConfig {
                    n,
                    iterations: sim.iterations,
                    plan: plan.clone(),
                    estimator,
                    seed: common.seed,
                    truth_sample: sim.truth_sample,
                };
                let started = Instant::now();
                let m = pool.install(|| run_study_with_truth(&cfg, truth));
                eprintln!(
                    "n={n} {} {}: {} iterations, {} failed, {:.1}s",
                    estimator.label(),
                    plan.label(),
                    m.iterations,
                    m.failed,
                    started.elapsed().as_secs_f64()
                );
                results.push(m);
            }
        }
    }
    let config = Resolved {
        command: "simulate",
        seed: common.seed,
        simulate: sim,
    };
    match common.format {
        Format::Json => output::write_json(
            &common.out,
            &Document {
                config,
                results: &results,
            },
        ),
        Format::Csv => output::write_csv(&common.out, &config, &results),
    }
}
