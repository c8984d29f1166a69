//! Iterated conditional expectation (ICE) g-computation expressed as stacked
//! estimating equations.
//!
//! The crate is organised bottom-up:
//!
//! - [`mest`]: a general M-estimation engine (root finding, bread, meat,
//!   sandwich covariance, Wald intervals).
//! - [`data`]: wide-format longitudinal data with monotone censoring,
//!   treatment plans and design matrices.
//! - [`ice`]: the ICE estimating systems (unstratified, stratified,
//!   time-to-event, stacked contrasts) and end-to-end estimation.
//! - [`simulation`]: the three-period data-generating mechanism and the
//!   simulation-study harness.
//! - [`bootstrap`]: the nonparametric bootstrap comparator.

pub mod bootstrap;
pub mod data;
pub mod ice;
pub mod mest;
pub mod simulation;
