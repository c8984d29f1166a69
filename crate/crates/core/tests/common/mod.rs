#![allow(dead_code)]

use gcomp_core::data::{LongitudinalDataset, TreatmentPlan, UnitRecord};
use gcomp_core::ice::expit;
use nalgebra::{DMatrix, DVector};

/// Newton-Raphson logistic fit with no separation guard; stops when the score
/// is at rounding level. Returns `None` if the information matrix is singular.
pub fn oracle_logistic(x: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let p = x[0].len();
    let mut beta = DVector::<f64>::zeros(p);
    for _ in 0..500 {
        let mut score = DVector::<f64>::zeros(p);
        let mut info = DMatrix::<f64>::zeros(p, p);
        for (row, yi) in x.iter().zip(y) {
            let eta: f64 = row.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
            let pr = expit(eta);
            let w = pr * (1.0 - pr);
            for a in 0..p {
                score[a] += (yi - pr) * row[a];
                for b in 0..p {
                    info[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        if score.amax() < 1e-13 * x.len() as f64 {
            return Some(beta.iter().copied().collect());
        }
        let step = info.lu().solve(&score)?;
        beta += step;
    }
    Some(beta.iter().copied().collect())
}

/// Rows of the study design at time `k` with the given treatment history.
pub fn study_row(u: &UnitRecord, k: usize, a: &[u8], stratified: bool) -> Vec<f64> {
    let l = |j: usize| u.covariates[j][0].expect("covariate observed");
    let af = |j: usize| f64::from(a[j]);
    let (treat, cov): (Vec<f64>, Vec<f64>) = match k {
        0 => (vec![af(0)], vec![l(0)]),
        1 => (vec![af(0), af(1)], vec![l(0), l(1)]),
        2 => (vec![af(1), af(2)], vec![l(1), l(2)]),
        _ => unreachable!(),
    };
    let mut row = vec![1.0];
    if !stratified {
        row.extend(treat);
    }
    row.extend(cov);
    row
}

/// The backwards sequential-regression algorithm for the three-period study
/// design, written directly against unit records.
pub fn oracle_sequential_mu(
    data: &LongitudinalDataset,
    plan: &TreatmentPlan,
    stratified: bool,
) -> Option<f64> {
    let tau = data.tau();
    assert_eq!(tau, 3);
    let planned = |u: &UnitRecord| -> Vec<u8> {
        (0..tau)
            .map(|k| plan.assign(k, u.treatment[k]).unwrap_or(0))
            .collect()
    };
    let observed =
        |u: &UnitRecord| -> Vec<u8> { u.treatment.iter().map(|a| a.unwrap_or(0)).collect() };
    let follows = |u: &UnitRecord, k: usize| -> bool {
        (0..=k)
            .all(|j| u.treatment[j].is_some() && plan.assign(j, u.treatment[j]) == u.treatment[j])
    };
    let mut target: Vec<Option<f64>> = data.units().iter().map(|u| u.outcome[tau - 1]).collect();
    for k in (0..tau).rev() {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (i, u) in data.units().iter().enumerate() {
            if u.censor[k] == 0 && (!stratified || follows(u, k)) {
                xs.push(study_row(u, k, &observed(u), stratified));
                ys.push(target[i].expect("target defined"));
            }
        }
        if xs.is_empty() {
            return None;
        }
        let beta = oracle_logistic(&xs, &ys)?;
        target = data
            .units()
            .iter()
            .map(|u| {
                let uncensored = k == 0 || u.censor[k - 1] == 0;
                uncensored.then(|| {
                    let row = study_row(u, k, &planned(u), stratified);
                    expit(row.iter().zip(&beta).map(|(a, b)| a * b).sum())
                })
            })
            .collect();
    }
    Some(target.iter().map(|t| t.unwrap()).sum::<f64>() / data.n() as f64)
}

/// One unit with no covariate columns.
pub fn bare_unit(treatment: &[Option<u8>], censor: &[u8], outcome: &[Option<f64>]) -> UnitRecord {
    UnitRecord {
        covariates: treatment.iter().map(|_| Vec::new()).collect(),
        treatment: treatment.to_vec(),
        censor: censor.to_vec(),
        outcome: outcome.to_vec(),
    }
}

/// `E[Y_3(a)]` for the study mechanism by exact enumeration over `(L0, L1, L2)`.
pub fn exact_truth(a: [u8; 3]) -> f64 {
    let b = |p: f64, v: u8| if v == 1 { p } else { 1.0 - p };
    let [a0, a1, a2] = a.map(f64::from);
    let mut total = 0.0;
    for l0 in 0..2u8 {
        let l0f = f64::from(l0);
        for l1 in 0..2u8 {
            let l1f = f64::from(l1);
            let p_l1 = b(expit(-1.0 - a0 + l0f), l1);
            for l2 in 0..2u8 {
                let l2f = f64::from(l2);
                let p_l2 = b(expit(-1.0 - 0.2 * a0 - a1 + 0.5 * l0f + l1f), l2);
                let p_y = expit(-1.5 + 0.1 * a1 + 1.2 * a2 - 0.5 * l1f - 2.0 * l2f);
                total += 0.5 * p_l1 * p_l2 * p_y;
            }
        }
    }
    total
}
