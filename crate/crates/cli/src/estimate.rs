use serde::Serialize;

use gcomp_core::data::{load_csv, LongitudinalDataset};
use gcomp_core::ice::{estimate, estimate_contrast, ContrastResult, EstimateResult, IceConfig};
use gcomp_core::mest::SolveConfig;
use gcomp_core::simulation::{generate, study_design_specs, Estimator};

use crate::config::{Common, DataSource, EstimateSection, Format};
use crate::error::CliError;
use crate::output::{self, finite};

pub fn load_dataset(section: &EstimateSection) -> Result<LongitudinalDataset, CliError> {
    let data = match &section.data {
        DataSource::Csv { path, schema } => load_csv(path, schema).map_err(|e| match e {
            gcomp_core::data::DataError::Io(io) => {
                CliError::Runtime(format!("cannot read {}: {io}", path.display()))
            }
            other => other.into(),
        })?,
        DataSource::Simulated { n, seed } => generate(*n, *seed),
    };
    data.validate()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(data)
}

pub fn ice_config(section: &EstimateSection) -> IceConfig {
    let mut cfg = IceConfig::new(section.design.clone().unwrap_or_else(study_design_specs))
        .stratified(section.estimator == Estimator::Stratified);
    cfg.outcome_kind = section.outcome_kind;
    cfg
}

pub fn solve_config(section: &EstimateSection) -> SolveConfig {
    SolveConfig {
        max_iterations: section.solver.max_iterations,
        root_tolerance: section.solver.root_tolerance,
        ..SolveConfig::default()
    }
}

#[derive(Serialize)]
struct Resolved<'a> {
    command: &'static str,
    seed: u64,
    estimate: &'a EstimateSection,
}

#[derive(Serialize)]
struct Document<'a> {
    config: Resolved<'a>,
    n: usize,
    estimate: &'a EstimateResult,
    comparison: Option<&'a EstimateResult>,
    contrast: Option<&'a ContrastResult>,
}

#[derive(Serialize)]
struct Row {
    quantity: String,
    estimate: Option<f64>,
    se: Option<f64>,
    ci_lower: Option<f64>,
    ci_upper: Option<f64>,
    converged: bool,
    iterations: usize,
    failure: Option<String>,
}

impl Row {
    fn from_estimate(label: String, r: &EstimateResult) -> Self {
        Self {
            quantity: label,
            estimate: finite(r.mu_hat),
            se: finite(r.se),
            ci_lower: finite(r.ci_lower),
            ci_upper: finite(r.ci_upper),
            converged: r.converged,
            iterations: r.iterations,
            failure: r.failure.clone(),
        }
    }
}

pub fn run(common: &Common, section: &EstimateSection) -> Result<(), CliError> {
    let data = load_dataset(section)?;
    let ice = ice_config(section);
    let solve = solve_config(section);
    let main = estimate(&data, &section.plan, &ice, &solve, section.level)?;
    let (comparison, contrast) = match &section.contrast {
        Some(b) => (
            Some(estimate(&data, b, &ice, &solve, section.level)?),
            Some(estimate_contrast(
                &data,
                &section.plan,
                b,
                &ice,
                &solve,
                section.level,
            )?),
        ),
        None => (None, None),
    };

    let warnings = main
        .warnings
        .iter()
        .chain(comparison.iter().flat_map(|c| &c.warnings))
        .chain(contrast.iter().flat_map(|c| &c.warnings));
    for w in warnings {
        eprintln!("warning: {w}");
    }

    let config = Resolved {
        command: "estimate",
        seed: common.seed,
        estimate: section,
    };
    match common.format {
        Format::Json => output::write_json(
            &common.out,
            &Document {
                config,
                n: data.n(),
                estimate: &main,
                comparison: comparison.as_ref(),
                contrast: contrast.as_ref(),
            },
        )?,
        Format::Csv => {
            let mut rows = vec![Row::from_estimate(section.plan.label(), &main)];
            if let (Some(b), Some(cmp), Some(con)) = (&section.contrast, &comparison, &contrast) {
                rows.push(Row::from_estimate(b.label(), cmp));
                rows.push(Row {
                    quantity: format!("{} - {}", section.plan.label(), b.label()),
                    estimate: finite(con.difference.estimate),
                    se: finite(con.difference.se),
                    ci_lower: finite(con.difference.ci_lower),
                    ci_upper: finite(con.difference.ci_upper),
                    converged: con.converged,
                    iterations: con.iterations,
                    failure: con.failure.clone(),
                });
            }
            output::write_csv(&common.out, &config, &rows)?;
        }
    }

    let failures: Vec<String> = std::iter::once(&main.failure)
        .chain(comparison.iter().map(|c| &c.failure))
        .chain(contrast.iter().map(|c| &c.failure))
        .flatten()
        .cloned()
        .collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Convergence(format!(
            "{}; results written to {}",
            failures.join("; "),
            common.out.display()
        )))
    }
}
