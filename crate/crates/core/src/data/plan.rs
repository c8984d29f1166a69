use serde::{Deserialize, Serialize};

use super::dataset::LongitudinalDataset;

/// Deterministic treatment plan over times `0..tau`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatmentPlan {
    Always,
    Never,
    /// Explicit `(a*_0, ..., a*_{tau-1})`.
    Custom(Vec<u8>),
    /// Each unit keeps its observed treatment history.
    NaturalCourse,
}

impl TreatmentPlan {
    /// Planned treatment at time `k` given the observed value.
    pub fn assign(&self, k: usize, observed: Option<u8>) -> Option<u8> {
        match self {
            TreatmentPlan::Always => Some(1),
            TreatmentPlan::Never => Some(0),
            TreatmentPlan::Custom(v) => v.get(k).copied(),
            TreatmentPlan::NaturalCourse => observed,
        }
    }

    pub fn is_natural_course(&self) -> bool {
        matches!(self, TreatmentPlan::NaturalCourse)
    }

    /// Checks a custom plan has one binary value per time.
    pub fn check(&self, tau: usize) -> Result<(), String> {
        match self {
            TreatmentPlan::Custom(v) if v.len() != tau => Err(format!(
                "custom plan has {} entries, dataset has {tau} treatment times",
                v.len()
            )),
            TreatmentPlan::Custom(v) if v.iter().any(|&a| a > 1) => {
                Err("custom plan values must be 0 or 1".to_string())
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            TreatmentPlan::Always => "always".into(),
            TreatmentPlan::Never => "never".into(),
            TreatmentPlan::NaturalCourse => "natural_course".into(),
            TreatmentPlan::Custom(v) => {
                let s: Vec<String> = v.iter().map(|a| a.to_string()).collect();
                format!("custom({})", s.join(","))
            }
        }
    }
}

/// `I(A_bar_{i,k} = a*_bar_{i,k})`: whether each unit followed the plan through time `k`.
///
/// A missing treatment counts as not following. Under the natural course every
/// unit follows its own history.
pub fn followers_mask(dataset: &LongitudinalDataset, plan: &TreatmentPlan, k: usize) -> Vec<bool> {
    dataset
        .units()
        .iter()
        .map(|u| {
            plan.is_natural_course()
                || (0..=k).all(|j| match u.treatment_at(j) {
                    Some(a) => plan.assign(j, Some(a)) == Some(a),
                    None => false,
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::UnitRecord;

    fn ds(treatments: &[[u8; 3]]) -> LongitudinalDataset {
        let units = treatments
            .iter()
            .map(|a| UnitRecord {
                covariates: vec![vec![]; 3],
                treatment: a.iter().map(|&x| Some(x)).collect(),
                censor: vec![0; 3],
                outcome: vec![Some(0.0); 3],
            })
            .collect();
        LongitudinalDataset::new(vec![vec![]; 3], units).unwrap()
    }

    #[test]
    fn always_mask() {
        let d = ds(&[[1, 1, 0]]);
        assert_eq!(followers_mask(&d, &TreatmentPlan::Always, 1), vec![true]);
        assert_eq!(followers_mask(&d, &TreatmentPlan::Always, 2), vec![false]);
    }

    #[test]
    fn natural_course_all_ones() {
        let d = ds(&[[1, 1, 0], [0, 1, 0]]);
        assert_eq!(
            followers_mask(&d, &TreatmentPlan::NaturalCourse, 2),
            vec![true, true]
        );
    }

    #[test]
    fn custom_plan_checks() {
        assert!(TreatmentPlan::Custom(vec![1, 0]).check(3).is_err());
        assert!(TreatmentPlan::Custom(vec![1, 0, 2]).check(3).is_err());
        assert!(TreatmentPlan::Custom(vec![1, 0, 1]).check(3).is_ok());
        let d = ds(&[[1, 0, 1], [1, 1, 1]]);
        let p = TreatmentPlan::Custom(vec![1, 0, 1]);
        assert_eq!(followers_mask(&d, &p, 2), vec![true, false]);
    }
}
