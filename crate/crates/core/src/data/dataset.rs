use std::fmt;

use thiserror::Error;

/// Observations for one unit in wide format.
///
/// Index conventions follow the time ordering `L0 -> A0 -> C1 -> Y1 -> L1 -> A1 -> ... -> Y_tau`:
/// `covariates[k]` and `treatment[k]` hold `L_k`, `A_k` for `k = 0..tau-1`;
/// `censor[k - 1]` and `outcome[k - 1]` hold `C_k`, `Y_k` for `k = 1..tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRecord {
    pub covariates: Vec<Vec<Option<f64>>>,
    pub treatment: Vec<Option<u8>>,
    pub censor: Vec<u8>,
    pub outcome: Vec<Option<f64>>,
}

impl UnitRecord {
    /// `C_k`, with `C_0 = 0` by convention.
    pub fn censored_at(&self, k: usize) -> bool {
        k > 0 && self.censor[k - 1] == 1
    }

    pub fn treatment_at(&self, k: usize) -> Option<u8> {
        self.treatment[k]
    }

    /// `Y_k` for `k >= 1`.
    pub fn outcome_at(&self, k: usize) -> Option<f64> {
        self.outcome[k - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Covariate,
    Treatment,
    Censor,
    Outcome,
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Field::Covariate => "covariate",
            Field::Treatment => "treatment",
            Field::Censor => "censoring indicator",
            Field::Outcome => "outcome",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rule {
    /// Vector lengths disagree with `tau` or the covariate names.
    Shape,
    /// `C_k = 1` followed by `C_{k'} = 0` for some `k' > k`.
    NonMonotoneCensoring,
    /// Value recorded after the unit was lost to follow-up.
    ValueAfterCensoring(Field),
    /// Value absent while the unit is still under follow-up.
    MissingWhileUncensored(Field),
    /// Binary field outside {0, 1}.
    NonBinary(Field),
    /// Outcome outside [0, 1] or a non-finite covariate.
    OutOfRange(Field),
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::Shape => write!(f, "record shape does not match the dataset layout"),
            Rule::NonMonotoneCensoring => write!(f, "censoring is not monotone"),
            Rule::ValueAfterCensoring(x) => write!(f, "{x} present after loss to follow-up"),
            Rule::MissingWhileUncensored(x) => write!(f, "{x} missing while uncensored"),
            Rule::NonBinary(x) => write!(f, "{x} is not binary"),
            Rule::OutOfRange(x) => write!(f, "{x} out of range"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unit {unit}, time {time}: {rule}")]
pub struct ValidationError {
    /// Zero-based unit index.
    pub unit: usize,
    pub time: usize,
    pub rule: Rule,
}

/// Wide-format longitudinal data with monotone loss to follow-up.
///
/// Immutable once constructed; construction always validates.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalDataset {
    tau: usize,
    covariate_names: Vec<Vec<String>>,
    units: Vec<UnitRecord>,
}

impl LongitudinalDataset {
    /// `covariate_names[k]` names the covariates measured at time `k = 0..tau-1`.
    pub fn new(
        covariate_names: Vec<Vec<String>>,
        units: Vec<UnitRecord>,
    ) -> Result<Self, ValidationError> {
        let ds = Self {
            tau: covariate_names.len(),
            covariate_names,
            units,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.units.len()
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn covariate_names(&self, k: usize) -> &[String] {
        &self.covariate_names[k]
    }

    pub fn all_covariate_names(&self) -> &[Vec<String>] {
        &self.covariate_names
    }

    pub fn covariate_index(&self, k: usize, name: &str) -> Option<usize> {
        self.covariate_names.get(k)?.iter().position(|c| c == name)
    }

    pub fn units(&self) -> &[UnitRecord] {
        &self.units
    }

    pub fn unit(&self, i: usize) -> &UnitRecord {
        &self.units[i]
    }

    /// New dataset made of the listed units (repeats allowed).
    pub fn resample(&self, indices: &[usize]) -> Self {
        Self {
            tau: self.tau,
            covariate_names: self.covariate_names.clone(),
            units: indices.iter().map(|&i| self.units[i].clone()).collect(),
        }
    }

    /// Check monotone censoring, presence/missingness alignment and value domains.
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.tau == 0 {
            return Err(ValidationError {
                unit: 0,
                time: 0,
                rule: Rule::Shape,
            });
        }
        for (i, u) in self.units.iter().enumerate() {
            validate_unit(i, u, self.tau, &self.covariate_names)?;
        }
        Ok(())
    }
}

fn validate_unit(
    unit: usize,
    u: &UnitRecord,
    tau: usize,
    names: &[Vec<String>],
) -> Result<(), ValidationError> {
    let err = |time, rule| Err(ValidationError { unit, time, rule });
    if u.covariates.len() != tau
        || u.treatment.len() != tau
        || u.censor.len() != tau
        || u.outcome.len() != tau
        || u.covariates
            .iter()
            .zip(names)
            .any(|(c, n)| c.len() != n.len())
    {
        return err(0, Rule::Shape);
    }
    for k in 1..=tau {
        let c = u.censor[k - 1];
        if c > 1 {
            return err(k, Rule::NonBinary(Field::Censor));
        }
        if k > 1 && u.censor[k - 2] == 1 && c == 0 {
            return err(k, Rule::NonMonotoneCensoring);
        }
    }
    for k in 0..tau {
        let observed = !u.censored_at(k);
        for v in &u.covariates[k] {
            match (observed, v) {
                (true, None) => return err(k, Rule::MissingWhileUncensored(Field::Covariate)),
                (false, Some(_)) => return err(k, Rule::ValueAfterCensoring(Field::Covariate)),
                (true, Some(x)) if !x.is_finite() => {
                    return err(k, Rule::OutOfRange(Field::Covariate))
                }
                _ => {}
            }
        }
        match (observed, u.treatment[k]) {
            (true, None) => return err(k, Rule::MissingWhileUncensored(Field::Treatment)),
            (false, Some(_)) => return err(k, Rule::ValueAfterCensoring(Field::Treatment)),
            (true, Some(a)) if a > 1 => return err(k, Rule::NonBinary(Field::Treatment)),
            _ => {}
        }
    }
    for k in 1..=tau {
        let observed = !u.censored_at(k);
        match (observed, u.outcome[k - 1]) {
            (true, None) => return err(k, Rule::MissingWhileUncensored(Field::Outcome)),
            (false, Some(_)) => return err(k, Rule::ValueAfterCensoring(Field::Outcome)),
            (true, Some(y)) if !(0.0..=1.0).contains(&y) => {
                return err(k, Rule::OutOfRange(Field::Outcome))
            }
            _ => {}
        }
    }
    Ok(())
}
