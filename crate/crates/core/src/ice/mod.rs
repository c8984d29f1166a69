//! Iterated conditional expectation g-computation as stacked estimating equations.

mod estimate;
mod glm;
mod link;
mod sequential;
mod system;

use thiserror::Error;

pub use estimate::{
    estimate, estimate_contrast, estimate_contrast_system, estimate_system, point_estimate,
    point_estimate_system, ContrastResult, ContrastSummary, EstimateResult, EstimationFailure,
    IceTheta,
};
pub use glm::{fit_logistic, GlmError, SEPARATION_ETA};
pub use link::{expit, logit, Link};
pub use sequential::{sequential_fit, SequentialError, SequentialFit};
pub use system::{
    build_stacked_contrast_system, build_stratified_system, build_survival_system,
    build_unstratified_system, IceConfig, IceSystem, OutcomeKind, StackedContrastSystem,
};

use crate::data::DataError;

#[derive(Debug, Error)]
pub enum IceError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("expected {expected} design specs (one per treatment time), got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("unit {unit}: event indicator reverts from 1 to 0 at time {time}")]
    EventNonMonotone { unit: usize, time: usize },
}
