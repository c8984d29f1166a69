//! Logistic (and fractional logistic) regression by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use super::link::expit;
use crate::mest::reciprocal_condition;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GlmError {
    #[error("no observations to fit")]
    Empty,
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("fitted probabilities numerically 0 or 1 (separation)")]
    Separation,
    #[error("IRLS did not converge")]
    NotConverged,
}

/// Linear predictors beyond this magnitude mean the fit is running off to infinity.
pub const SEPARATION_ETA: f64 = 30.0;

const MAX_ITER: usize = 100;

/// Fit `E[y | x] = expit(x' beta)` over rows `x` (row-major, `p` columns).
///
/// `y` may be fractional in [0, 1]; the estimating equation is the logistic score
/// either way.
pub fn fit_logistic(x: &[f64], y: &[f64], p: usize) -> Result<Vec<f64>, GlmError> {
    let m = y.len();
    debug_assert_eq!(x.len(), m * p);
    if m == 0 {
        return Err(GlmError::Empty);
    }
    let design = DMatrix::from_row_slice(m, p, x);
    let gram = design.transpose() * &design / m as f64;
    if reciprocal_condition(&gram) < 1e-12 {
        return Err(GlmError::RankDeficient);
    }

    let mut beta = DVector::<f64>::zeros(p);
    for _ in 0..MAX_ITER {
        let eta = &design * &beta;
        if eta.iter().any(|e| e.abs() > SEPARATION_ETA) {
            return Err(GlmError::Separation);
        }
        let mut score = DVector::<f64>::zeros(p);
        let mut info = DMatrix::<f64>::zeros(p, p);
        for r in 0..m {
            let pr = expit(eta[r]);
            let w = pr * (1.0 - pr);
            let row = design.row(r);
            for a in 0..p {
                score[a] += (y[r] - pr) * row[a];
                for b in a..p {
                    info[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
        }
        let step = match info.cholesky() {
            Some(ch) => ch.solve(&score),
            None => return Err(GlmError::Separation),
        };
        beta += &step;
        let scale = 1.0 + beta.amax();
        if step.amax() <= 1e-11 * scale && score.amax() / (m as f64) < 1e-6 {
            // one extra Newton step from a converged point costs nothing and
            // drives the score to rounding level
            let eta = &design * &beta;
            if eta.iter().any(|e| e.abs() > SEPARATION_ETA) {
                return Err(GlmError::Separation);
            }
            return Ok(beta.iter().copied().collect());
        }
    }
    Err(GlmError::NotConverged)
}
