use serde::{Deserialize, Serialize};

/// Inverse logit, stable for large `|x|`.
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Link function of the sequential outcome models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    #[default]
    Logit,
}

impl Link {
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Logit => expit(eta),
        }
    }

    /// d mean / d eta.
    pub fn inverse_derivative(self, eta: f64) -> f64 {
        match self {
            Link::Logit => {
                let p = expit(eta);
                p * (1.0 - p)
            }
        }
    }
}
