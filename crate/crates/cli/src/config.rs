//! Run configuration: a TOML file whose values command-line flags override.
//!
//! Relative paths inside the file are resolved against the file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gcomp_core::bootstrap::BootstrapCi;
use gcomp_core::data::{CsvSchema, DesignSpec, TreatmentPlan};
use gcomp_core::ice::OutcomeKind;
use gcomp_core::simulation::{Estimator, DEFAULT_TRUTH_SAMPLE};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub simulate: Option<SimulateSection>,
    pub estimate: Option<EstimateSection>,
    pub bench: Option<BenchSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default = "default_grid_n")]
    pub n: Vec<usize>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<Estimator>,
    #[serde(default = "default_plans")]
    pub plans: Vec<TreatmentPlan>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_truth_sample")]
    pub truth_sample: usize,
}

fn default_grid_n() -> Vec<usize> {
    vec![250, 500, 1000, 2000, 5000]
}
fn default_estimators() -> Vec<Estimator> {
    vec![Estimator::Unstratified, Estimator::Stratified]
}
fn default_plans() -> Vec<TreatmentPlan> {
    vec![TreatmentPlan::Always, TreatmentPlan::Never]
}
fn default_iterations() -> usize {
    1000
}
fn default_truth_sample() -> usize {
    DEFAULT_TRUTH_SAMPLE
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            n: default_grid_n(),
            estimators: default_estimators(),
            plans: default_plans(),
            iterations: default_iterations(),
            truth_sample: default_truth_sample(),
        }
    }
}

/// Where the analysis data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Wide-format CSV file.
    Csv {
        path: PathBuf,
        #[serde(default)]
        schema: CsvSchema,
    },
    /// A dataset drawn from the built-in three-period mechanism.
    Simulated { n: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_root_tolerance")]
    pub root_tolerance: f64,
}

fn default_max_iterations() -> usize {
    10_000
}
fn default_root_tolerance() -> f64 {
    1e-9
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            max_iterations: default_max_iterations(),
            root_tolerance: default_root_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    pub data: DataSource,
    pub plan: TreatmentPlan,
    /// Optional comparison plan; the contrast reported is `plan - contrast`.
    #[serde(default)]
    pub contrast: Option<TreatmentPlan>,
    #[serde(default = "default_estimator")]
    pub estimator: Estimator,
    #[serde(default)]
    pub outcome_kind: OutcomeKind,
    /// One design per treatment time; defaults to the built-in study design for simulated data.
    #[serde(default)]
    pub design: Option<Vec<DesignSpec>>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub solver: SolverSection,
}

fn default_estimator() -> Estimator {
    Estimator::Unstratified
}
fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    #[serde(default = "default_ci")]
    pub ci: BootstrapCi,
}

fn default_resamples() -> usize {
    500
}
fn default_ci() -> BootstrapCi {
    BootstrapCi::Normal
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            resamples: default_resamples(),
            ci: default_ci(),
        }
    }
}

/// Flags shared by all subcommands; `Some` overrides the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub iterations: Option<usize>,
}

/// Settings common to every subcommand after merging file and flags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Common {
    pub seed: u64,
    pub workers: usize,
    pub format: Format,
    pub out: PathBuf,
}

pub fn load(path: Option<&Path>) -> Result<(FileConfig, PathBuf), CliError> {
    let Some(path) = path else {
        return Ok((FileConfig::default(), PathBuf::from(".")));
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg: FileConfig =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let base = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((cfg, base))
}

pub fn available_cores() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn resolve_common(
    file: &FileConfig,
    flags: &Overrides,
    default_workers: usize,
) -> Result<Common, CliError> {
    let workers = flags.workers.or(file.workers).unwrap_or(default_workers);
    if workers == 0 {
        return Err(CliError::Config("workers must be at least 1".into()));
    }
    let out = flags
        .out
        .clone()
        .or_else(|| file.out.clone())
        .ok_or_else(|| CliError::Config("no output path: pass --out or set 'out'".into()))?;
    Ok(Common {
        seed: flags.seed.or(file.seed).unwrap_or(0),
        workers,
        format: flags.format.or(file.format).unwrap_or(Format::Json),
        out,
    })
}

pub fn resolve_simulate(file: &FileConfig, flags: &Overrides) -> Result<SimulateSection, CliError> {
    let mut s = file.simulate.clone().unwrap_or_default();
    if let Some(it) = flags.iterations {
        s.iterations = it;
    }
    if s.n.is_empty() || s.estimators.is_empty() || s.plans.is_empty() {
        return Err(CliError::Config(
            "simulate grid needs at least one n, estimator and plan".into(),
        ));
    }
    if s.n.contains(&0) {
        return Err(CliError::Config("sample sizes must be positive".into()));
    }
    if s.iterations == 0 || s.truth_sample == 0 {
        return Err(CliError::Config(
            "iterations and truth_sample must be positive".into(),
        ));
    }
    if let Some(p) = s
        .plans
        .iter()
        .find(|p| !matches!(p, TreatmentPlan::Always | TreatmentPlan::Never))
    {
        return Err(CliError::Config(format!(
            "simulation plans are 'always' or 'never', got '{}'",
            p.label()
        )));
    }
    Ok(s)
}

pub fn resolve_estimate(file: &FileConfig, base: &Path) -> Result<EstimateSection, CliError> {
    let mut e = file
        .estimate
        .clone()
        .ok_or_else(|| CliError::Config("missing [estimate] section".into()))?;
    if !(e.level > 0.0 && e.level < 1.0) {
        return Err(CliError::Config("level must lie in (0, 1)".into()));
    }
    if e.solver.max_iterations == 0 || !(e.solver.root_tolerance > 0.0) {
        return Err(CliError::Config(
            "solver needs max_iterations >= 1 and root_tolerance > 0".into(),
        ));
    }
    match &mut e.data {
        DataSource::Csv { path, .. } => {
            if path.is_relative() {
                *path = base.join(&*path);
            }
            if e.design.is_none() {
                return Err(CliError::Config(
                    "CSV input needs a design: one [[estimate.design]] entry per treatment time"
                        .into(),
                ));
            }
        }
        DataSource::Simulated { n, .. } => {
            if *n == 0 {
                return Err(CliError::Config("simulated n must be positive".into()));
            }
        }
    }
    Ok(e)
}

pub fn resolve_bench(file: &FileConfig, flags: &Overrides) -> Result<BenchSection, CliError> {
    let mut b = file.bench.clone().unwrap_or_default();
    if let Some(it) = flags.iterations {
        b.resamples = it;
    }
    if b.resamples < 2 {
        return Err(CliError::Config("bench needs at least 2 resamples".into()));
    }
    Ok(b)
}
