//! Declarative design matrices over treatment and covariate histories.

use serde::{Deserialize, Serialize};

use super::dataset::{LongitudinalDataset, UnitRecord};
use super::plan::TreatmentPlan;
use super::DataError;

/// One or more design-matrix columns built from `(A_bar_k, L_bar_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Term {
    Intercept,
    /// `A_time`.
    Treatment {
        time: usize,
    },
    /// Raw covariate `L_time[name]`.
    Covariate {
        time: usize,
        name: String,
    },
    /// One indicator column per listed level (omit the reference level).
    Indicator {
        time: usize,
        name: String,
        levels: Vec<f64>,
    },
    /// Linear term plus `knots - 2` restricted cubic spline terms.
    Spline {
        time: usize,
        name: String,
        knots: Vec<f64>,
    },
    /// Every pairwise product of the columns of two terms.
    Interaction {
        left: Box<Term>,
        right: Box<Term>,
    },
}

impl Term {
    pub fn n_columns(&self) -> usize {
        match self {
            Term::Intercept | Term::Treatment { .. } | Term::Covariate { .. } => 1,
            Term::Indicator { levels, .. } => levels.len(),
            Term::Spline { knots, .. } => knots.len() - 1,
            Term::Interaction { left, right } => left.n_columns() * right.n_columns(),
        }
    }

    pub fn uses_treatment(&self) -> bool {
        match self {
            Term::Treatment { .. } => true,
            Term::Interaction { left, right } => left.uses_treatment() || right.uses_treatment(),
            _ => false,
        }
    }

    fn max_time(&self) -> Option<usize> {
        match self {
            Term::Intercept => None,
            Term::Treatment { time }
            | Term::Covariate { time, .. }
            | Term::Indicator { time, .. }
            | Term::Spline { time, .. } => Some(*time),
            Term::Interaction { left, right } => left.max_time().max(right.max_time()),
        }
    }

    fn check(&self, dataset: &LongitudinalDataset, k: usize) -> Result<(), DataError> {
        if let Some(t) = self.max_time() {
            if t > k {
                return Err(DataError::InvalidSpec(format!(
                    "term at time {t} used in the design for time {k}"
                )));
            }
        }
        match self {
            Term::Covariate { time, name }
            | Term::Indicator { time, name, .. }
            | Term::Spline { time, name, .. } => {
                if dataset.covariate_index(*time, name).is_none() {
                    return Err(DataError::MissingColumn {
                        name: name.clone(),
                        time: *time,
                    });
                }
            }
            _ => {}
        }
        match self {
            Term::Indicator { levels, .. } if levels.is_empty() => Err(DataError::InvalidSpec(
                "indicator term needs at least one level".into(),
            )),
            Term::Spline { knots, .. } => {
                if knots.len() < 3 || knots.windows(2).any(|w| !(w[0] < w[1])) {
                    Err(DataError::InvalidSpec(
                        "spline needs at least 3 strictly increasing knots".into(),
                    ))
                } else {
                    Ok(())
                }
            }
            Term::Interaction { left, right } => {
                left.check(dataset, k)?;
                right.check(dataset, k)
            }
            _ => Ok(()),
        }
    }

    fn push_columns(
        &self,
        unit: &UnitRecord,
        dataset: &LongitudinalDataset,
        treatment: &dyn Fn(usize) -> f64,
        out: &mut Vec<f64>,
    ) {
        let covariate = |time: usize, name: &str| {
            let c = dataset.covariate_index(time, name).expect("checked");
            unit.covariates[time][c].expect("present for uncensored unit")
        };
        match self {
            Term::Intercept => out.push(1.0),
            Term::Treatment { time } => out.push(treatment(*time)),
            Term::Covariate { time, name } => out.push(covariate(*time, name)),
            Term::Indicator { time, name, levels } => {
                let x = covariate(*time, name);
                out.extend(levels.iter().map(|l| if x == *l { 1.0 } else { 0.0 }));
            }
            Term::Spline { time, name, knots } => {
                let x = covariate(*time, name);
                out.push(x);
                out.extend(restricted_cubic_spline(x, knots));
            }
            Term::Interaction { left, right } => {
                let mut l = Vec::new();
                let mut r = Vec::new();
                left.push_columns(unit, dataset, treatment, &mut l);
                right.push_columns(unit, dataset, treatment, &mut r);
                for a in &l {
                    for b in &r {
                        out.push(a * b);
                    }
                }
            }
        }
    }
}

/// Nonlinear restricted cubic spline basis (Harrell's parameterisation, scaled
/// by `(t_last - t_first)^2`): `knots.len() - 2` values, linear beyond the boundary knots.
pub fn restricted_cubic_spline(x: f64, knots: &[f64]) -> Vec<f64> {
    let m = knots.len();
    let (t_km1, t_k) = (knots[m - 2], knots[m - 1]);
    let norm = (t_k - knots[0]).powi(2);
    let cube = |v: f64| if v > 0.0 { v * v * v } else { 0.0 };
    knots[..m - 2]
        .iter()
        .map(|&t_j| {
            (cube(x - t_j) - cube(x - t_km1) * (t_k - t_j) / (t_k - t_km1)
                + cube(x - t_k) * (t_km1 - t_j) / (t_k - t_km1))
                / norm
        })
        .collect()
}

/// Ordered list of terms defining the design matrix `X_k` for one time.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub terms: Vec<Term>,
}

impl DesignSpec {
    pub fn new(terms: Vec<Term>) -> Self {
        Self { terms }
    }

    pub fn n_columns(&self) -> usize {
        self.terms.iter().map(Term::n_columns).sum()
    }

    pub fn uses_treatment(&self) -> bool {
        self.terms.iter().any(Term::uses_treatment)
    }

    /// Spec with every treatment-dependent term removed.
    pub fn without_treatment(&self) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .filter(|t| !t.uses_treatment())
                .cloned()
                .collect(),
        }
    }

    pub fn check(&self, dataset: &LongitudinalDataset, k: usize) -> Result<(), DataError> {
        if k >= dataset.tau() {
            return Err(DataError::InvalidSpec(format!(
                "design time {k} outside 0..{}",
                dataset.tau()
            )));
        }
        if self.terms.is_empty() {
            return Err(DataError::InvalidSpec(format!(
                "design for time {k} has no terms"
            )));
        }
        self.terms.iter().try_for_each(|t| t.check(dataset, k))
    }

    /// Row of `X_{i,k}` (observed treatments) or `X*_{i,k}` (planned treatments).
    /// `None` when the unit is censored at `k`.
    pub fn row(
        &self,
        dataset: &LongitudinalDataset,
        unit: usize,
        k: usize,
        plan: Option<&TreatmentPlan>,
    ) -> Option<Vec<f64>> {
        let u = dataset.unit(unit);
        if u.censored_at(k) {
            return None;
        }
        let treatment = |j: usize| {
            let observed = u.treatment_at(j);
            let a = match plan {
                Some(p) => p.assign(j, observed),
                None => observed,
            };
            f64::from(a.expect("treatment present for uncensored unit"))
        };
        let mut out = Vec::with_capacity(self.n_columns());
        for t in &self.terms {
            t.push_columns(u, dataset, &treatment, &mut out);
        }
        Some(out)
    }
}

/// Dense design matrix over all units; rows of units censored at `k` are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n_cols: usize,
    values: Vec<f64>,
    present: Vec<bool>,
}

impl DesignMatrix {
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_rows(&self) -> usize {
        self.present.len()
    }

    pub fn row(&self, i: usize) -> Option<&[f64]> {
        self.present[i].then(|| &self.values[i * self.n_cols..(i + 1) * self.n_cols])
    }

    pub fn is_present(&self, i: usize) -> bool {
        self.present[i]
    }
}

/// Build `X_k` (when `plan` is `None`) or `X*_k` for every unit uncensored at `k`.
pub fn design_matrix(
    dataset: &LongitudinalDataset,
    k: usize,
    spec: &DesignSpec,
    plan: Option<&TreatmentPlan>,
) -> Result<DesignMatrix, DataError> {
    spec.check(dataset, k)?;
    if let Some(p) = plan {
        p.check(dataset.tau()).map_err(DataError::InvalidSpec)?;
    }
    let p = spec.n_columns();
    let n = dataset.n();
    let mut values = vec![0.0; n * p];
    let mut present = vec![false; n];
    for i in 0..n {
        if let Some(r) = spec.row(dataset, i, k, plan) {
            values[i * p..(i + 1) * p].copy_from_slice(&r);
            present[i] = true;
        }
    }
    Ok(DesignMatrix {
        n_cols: p,
        values,
        present,
    })
}
