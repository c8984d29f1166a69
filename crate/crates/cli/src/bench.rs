use std::time::Instant;

use serde::Serialize;

use gcomp_core::bootstrap::{
    bootstrap_contrast, bootstrap_estimate, BootstrapConfig, BootstrapResult,
};
use gcomp_core::ice::{estimate, estimate_contrast};

use crate::config::{BenchSection, Common, EstimateSection, Format};
use crate::error::CliError;
use crate::estimate::{ice_config, load_dataset, solve_config};
use crate::output::{self, finite};

/// Below this many resamples bootstrap summaries are unstable.
pub const SMALL_RESAMPLES: usize = 100;

#[derive(Serialize)]
struct Resolved<'a> {
    command: &'static str,
    seed: u64,
    workers: usize,
    estimate: &'a EstimateSection,
    bench: &'a BenchSection,
}

#[derive(Debug, Serialize)]
struct MethodRow {
    method: &'static str,
    estimate: Option<f64>,
    se: Option<f64>,
    ci_lower: Option<f64>,
    ci_upper: Option<f64>,
    resamples: usize,
    failures: usize,
    workers: usize,
    wall_time_seconds: f64,
    small_resamples: bool,
}

#[derive(Serialize)]
struct Document<'a> {
    config: Resolved<'a>,
    n: usize,
    quantity: String,
    small_resamples: bool,
    speedup: Option<f64>,
    methods: &'a [MethodRow],
}

fn bootstrap_row(method: &'static str, r: &BootstrapResult, small: bool) -> MethodRow {
    MethodRow {
        method,
        estimate: finite(r.estimate),
        se: finite(r.se),
        ci_lower: finite(r.ci_lower),
        ci_upper: finite(r.ci_upper),
        resamples: r.resamples,
        failures: r.failures,
        workers: r.workers,
        wall_time_seconds: r.wall_time_seconds,
        small_resamples: small,
    }
}

pub fn run(
    common: &Common,
    section: &EstimateSection,
    bench: &BenchSection,
) -> Result<(), CliError> {
    let data = load_dataset(section)?;
    let ice = ice_config(section);
    let solve = solve_config(section);
    let small = bench.resamples < SMALL_RESAMPLES;
    if small {
        eprintln!(
            "warning: {} resamples is below {SMALL_RESAMPLES}; bootstrap summaries are unreliable",
            bench.resamples
        );
    }

    let started = Instant::now();
    let (quantity, sandwich, failure) = match &section.contrast {
        None => {
            let r = estimate(&data, &section.plan, &ice, &solve, section.level)?;
            (
                section.plan.label(),
                (r.mu_hat, r.se, r.ci_lower, r.ci_upper),
                r.failure,
            )
        }
        Some(b) => {
            let r = estimate_contrast(&data, &section.plan, b, &ice, &solve, section.level)?;
            let d = &r.difference;
            (
                format!("{} - {}", section.plan.label(), b.label()),
                (d.estimate, d.se, d.ci_lower, d.ci_upper),
                r.failure,
            )
        }
    };
    let sandwich_time = started.elapsed().as_secs_f64();

    let boot = |workers: usize| {
        let cfg = BootstrapConfig {
            resamples: bench.resamples,
            seed: common.seed,
            workers,
            ci: bench.ci,
            level: section.level,
        };
        match &section.contrast {
            None => bootstrap_estimate(&data, &section.plan, &ice, &cfg),
            Some(b) => bootstrap_contrast(&data, &section.plan, b, &ice, &cfg),
        }
    };
    let sequential = boot(1)?;
    let parallel = boot(common.workers)?;
    let speedup = (parallel.wall_time_seconds > 0.0)
        .then(|| sequential.wall_time_seconds / parallel.wall_time_seconds);

    let methods = [
        MethodRow {
            method: "sandwich",
            estimate: finite(sandwich.0),
            se: finite(sandwich.1),
            ci_lower: finite(sandwich.2),
            ci_upper: finite(sandwich.3),
            resamples: 0,
            failures: usize::from(failure.is_some()),
            workers: 1,
            wall_time_seconds: sandwich_time,
            small_resamples: false,
        },
        bootstrap_row("bootstrap_sequential", &sequential, small),
        bootstrap_row("bootstrap_parallel", &parallel, small),
    ];
    for m in &methods {
        eprintln!(
            "{:<21} se={:<12} time={:.3}s workers={}",
            m.method,
            m.se.map_or("NA".to_string(), |s| format!("{s:.6}")),
            m.wall_time_seconds,
            m.workers
        );
    }

    let config = Resolved {
        command: "bench",
        seed: common.seed,
        workers: common.workers,
        estimate: section,
        bench,
    };
    match common.format {
        Format::Json => output::write_json(
            &common.out,
            &Document {
                config,
                n: data.n(),
                quantity,
                small_resamples: small,
                speedup,
                methods: &methods,
            },
        )?,
        Format::Csv => output::write_csv(&common.out, &config, &methods)?,
    }

    match failure {
        Some(f) => Err(CliError::Convergence(format!(
            "sandwich: {f}; report written to {}",
            common.out.display()
        ))),
        None => Ok(()),
    }
}
