//! Three-period data-generating mechanism with a binary time-varying confounder,
//! treatment-dependent confounding and treatment-informative loss to follow-up.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{LongitudinalDataset, TreatmentPlan, UnitRecord};
use crate::ice::expit;

/// Independent random stream `stream` of `seed`; identical across thread schedules.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Name of the single covariate measured at each time.
pub const COVARIATE: &str = "L";

const TAU: usize = 3;

fn bern<R: Rng + ?Sized>(rng: &mut R, p: f64) -> u8 {
    u8::from(rng.gen::<f64>() < p)
}

/// One unit's potential outcomes, potential covariates and observed data.
#[derive(Debug, Clone, PartialEq)]
pub struct DgmDraw {
    pub l0: u8,
    /// `Y_1(a0)`.
    pub y1: [u8; 2],
    /// `L_1(a0)`.
    pub l1: [u8; 2],
    /// `Y_2(a0, a1)`.
    pub y2: [[u8; 2]; 2],
    /// `L_2(a0, a1)`.
    pub l2: [[u8; 2]; 2],
    /// `Y_3(a0, a1, a2)`.
    pub y3: [[[u8; 2]; 2]; 2],
    /// Observed treatments `(A0, A1, A2)` before censoring is applied.
    pub a: [u8; 3],
    /// `(C1, C2, C3)`.
    pub c: [u8; 3],
}

impl DgmDraw {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let l0 = bern(rng, 0.5);
        let l0f = f64::from(l0);
        let mut y1 = [0; 2];
        let mut l1 = [0; 2];
        for a0 in 0..2 {
            let a0f = a0 as f64;
            y1[a0] = bern(rng, expit(-1.5 + 0.5 * a0f - 2.0 * l0f));
            l1[a0] = bern(rng, expit(-1.0 - a0f + l0f));
        }
        let mut y2 = [[0; 2]; 2];
        let mut l2 = [[0; 2]; 2];
        for a0 in 0..2 {
            let l1f = f64::from(l1[a0]);
            for a1 in 0..2 {
                let (a0f, a1f) = (a0 as f64, a1 as f64);
                y2[a0][a1] = bern(
                    rng,
                    expit(-1.5 + 0.1 * a0f + 1.2 * a1f - 0.5 * l0f - 2.0 * l1f),
                );
                l2[a0][a1] = bern(rng, expit(-1.0 - 0.2 * a0f - a1f + 0.5 * l0f + l1f));
            }
        }
        let mut y3 = [[[0; 2]; 2]; 2];
        for a0 in 0..2 {
            for a1 in 0..2 {
                let l1f = f64::from(l1[a0]);
                let l2f = f64::from(l2[a0][a1]);
                for a2 in 0..2 {
                    let (a1f, a2f) = (a1 as f64, a2 as f64);
                    y3[a0][a1][a2] = bern(
                        rng,
                        expit(-1.5 + 0.1 * a1f + 1.2 * a2f - 0.5 * l1f - 2.0 * l2f),
                    );
                }
            }
        }

        let a0 = bern(rng, expit(1.0 - 2.0 * l0f));
        let l1_obs = f64::from(l1[a0 as usize]);
        let a1 = bern(rng, expit(-1.0 - 0.2 * l0f - l1_obs + 1.75 * f64::from(a0)));
        let l2_obs = f64::from(l2[a0 as usize][a1 as usize]);
        let a2 = bern(
            rng,
            expit(-1.0 - 0.2 * l1_obs - l2_obs + 1.75 * f64::from(a1)),
        );

        let c1 = bern(rng, expit(-2.5 - 0.5 * f64::from(a0)));
        let c2 = if c1 == 1 {
            1
        } else {
            bern(rng, expit(-2.5 - 0.5 * f64::from(a1)))
        };
        let c3 = if c2 == 1 {
            1
        } else {
            bern(rng, expit(-2.5 - 0.5 * f64::from(a2)))
        };

        Self {
            l0,
            y1,
            l1,
            y2,
            l2,
            y3,
            a: [a0, a1, a2],
            c: [c1, c2, c3],
        }
    }

    /// `Y_3` under a fixed treatment history.
    pub fn y3_under(&self, a: [u8; 3]) -> u8 {
        self.y3[a[0] as usize][a[1] as usize][a[2] as usize]
    }

    /// Observed record by consistency, with `L_k, A_k, Y_k` missing once `C_k = 1`.
    pub fn observed(&self) -> UnitRecord {
        let [a0, a1, a2] = self.a.map(usize::from);
        let l = [self.l0, self.l1[a0], self.l2[a0][a1]];
        let y = [self.y1[a0], self.y2[a0][a1], self.y3[a0][a1][a2]];
        let mut rec = UnitRecord {
            covariates: l.iter().map(|v| vec![Some(f64::from(*v))]).collect(),
            treatment: self.a.iter().map(|v| Some(*v)).collect(),
            censor: self.c.to_vec(),
            outcome: y.iter().map(|v| Some(f64::from(*v))).collect(),
        };
        for k in 1..=TAU {
            if self.c[k - 1] == 1 {
                rec.outcome[k - 1] = None;
                if k < TAU {
                    rec.covariates[k] = vec![None];
                    rec.treatment[k] = None;
                }
            }
        }
        rec
    }
}

fn covariate_names() -> Vec<Vec<String>> {
    (0..TAU).map(|_| vec![COVARIATE.to_string()]).collect()
}

pub fn generate_with_rng<R: Rng + ?Sized>(n: usize, rng: &mut R) -> LongitudinalDataset {
    let units = (0..n).map(|_| DgmDraw::draw(rng).observed()).collect();
    LongitudinalDataset::new(covariate_names(), units)
        .expect("generated data satisfies the monotone-censoring layout")
}

/// Observed data for `n` units.
pub fn generate(n: usize, seed: u64) -> LongitudinalDataset {
    generate_with_rng(n, &mut substream(seed, 0))
}

/// Monte Carlo value of `E[Y_3(a*)]` from `truth_sample` draws with treatment forced.
///
/// Only `Always`, `Never` and `Custom` plans are meaningful here; the natural
/// course gives the uncensored observed mean.
pub fn true_value(plan: &TreatmentPlan, truth_sample: usize, seed: u64) -> f64 {
    let mut rng = substream(seed, u64::MAX);
    let mut total = 0u64;
    for _ in 0..truth_sample {
        let d = DgmDraw::draw(&mut rng);
        let a = std::array::from_fn(|k| plan.assign(k, Some(d.a[k])).expect("plan defined"));
        total += u64::from(d.y3_under(a));
    }
    total as f64 / truth_sample as f64
}

/// `E[Y_3(a*)]` by exact enumeration over `(L0, L1, L2)`; `None` for the natural course.
pub fn exact_true_value(plan: &TreatmentPlan) -> Option<f64> {
    if plan.is_natural_course() || plan.check(TAU).is_err() {
        return None;
    }
    let a: [f64; 3] = std::array::from_fn(|k| f64::from(plan.assign(k, None).expect("fixed plan")));
    let bern_pmf = |p: f64, v: f64| if v == 1.0 { p } else { 1.0 - p };
    let mut total = 0.0;
    for l0 in [0.0, 1.0] {
        for l1 in [0.0, 1.0] {
            let p1 = bern_pmf(expit(-1.0 - a[0] + l0), l1);
            for l2 in [0.0, 1.0] {
                let p2 = bern_pmf(expit(-1.0 - 0.2 * a[0] - a[1] + 0.5 * l0 + l1), l2);
                let py = expit(-1.5 + 0.1 * a[1] + 1.2 * a[2] - 0.5 * l1 - 2.0 * l2);
                total += 0.5 * p1 * p2 * py;
            }
        }
    }
    Some(total)
}
