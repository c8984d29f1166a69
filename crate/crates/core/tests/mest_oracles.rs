use gcomp_core::ice::expit;
use gcomp_core::mest::{
    bread, m_estimate, meat, numerical_jacobian, sandwich, solve_estimating_equations,
    EstimatingSystem, MestError, SolveConfig,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Logistic-regression score `(y - expit(x'b)) x`.
struct LogisticScore {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl EstimatingSystem for LogisticScore {
    fn n_units(&self) -> usize {
        self.y.len()
    }
    fn dim(&self) -> usize {
        self.x[0].len()
    }
    fn psi(&self, unit: usize, theta: &[f64], out: &mut [f64]) {
        let x = &self.x[unit];
        let eta: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
        let r = self.y[unit] - expit(eta);
        for (o, xj) in out.iter_mut().zip(x) {
            *o = r * xj;
        }
    }
}

impl LogisticScore {
    fn random(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Self {
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut row = vec![1.0];
                row.extend((1..p).map(|_| rng.gen_range(-2.0..2.0)));
                row
            })
            .collect();
        let y = (0..n)
            .map(|_| f64::from(u8::from(rng.gen::<bool>())))
            .collect();
        Self { x, y }
    }

    /// `-sum_i p_i (1 - p_i) x_i x_i'`.
    fn hessian(&self, beta: &[f64]) -> DMatrix<f64> {
        let p = self.dim();
        let mut h = DMatrix::zeros(p, p);
        for x in &self.x {
            let eta: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
            let w = expit(eta) * (1.0 - expit(eta));
            for a in 0..p {
                for b in 0..p {
                    h[(a, b)] -= w * x[a] * x[b];
                }
            }
        }
        h
    }
}

#[test]
fn logistic_jacobian_matches_analytic_hessian() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let p = rng.gen_range(2..5);
        let sys = LogisticScore::random(&mut rng, 60, p);
        let beta: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let num = numerical_jacobian(&sys, &beta, &SolveConfig::default()).unwrap();
        let exact = sys.hessian(&beta);
        for (a, b) in num.iter().zip(exact.iter()) {
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1e-3), "{a} vs {b}");
        }
    }
}

#[test]
fn logistic_sandwich_matches_closed_form() {
    // bread = (1/n) sum w x x', meat = (1/n) sum r^2 x x'
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sys = LogisticScore::random(&mut rng, 400, 3);
    let fit = m_estimate(&sys, &[0.0; 3], &SolveConfig::default()).unwrap();
    let n = 400.0;
    let b = -sys.hessian(&fit.theta) / n;
    let mut f = DMatrix::zeros(3, 3);
    let mut psi = vec![0.0; 3];
    for i in 0..400 {
        sys.psi(i, &fit.theta, &mut psi);
        for a in 0..3 {
            for c in 0..3 {
                f[(a, c)] += psi[a] * psi[c] / n;
            }
        }
    }
    let binv = b.clone().try_inverse().unwrap();
    let v = &binv * &f * binv.transpose();
    for j in 0..3 {
        let se = (v[(j, j)] / n).sqrt();
        assert!((fit.sandwich.standard_errors[j] - se).abs() < 1e-6 * se);
    }
    assert!((fit.sandwich.bread.clone() - b).amax() < 1e-6);
}

/// Two-parameter mean/variance system: `(x - mu, (x - mu)^2 - s2)`.
struct MeanVariance(Vec<f64>);

impl EstimatingSystem for MeanVariance {
    fn n_units(&self) -> usize {
        self.0.len()
    }
    fn dim(&self) -> usize {
        2
    }
    fn psi(&self, unit: usize, theta: &[f64], out: &mut [f64]) {
        let d = self.0[unit] - theta[0];
        out[0] = d;
        out[1] = d * d - theta[1];
    }
}

#[test]
fn mean_variance_system_recovers_plug_in_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let xs: Vec<f64> = (0..500).map(|_| rng.gen_range(-1.0..3.0)).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let sys = MeanVariance(xs);
    let sol = solve_estimating_equations(&sys, &[0.0, 1.0], &SolveConfig::default()).unwrap();
    assert!((sol.theta[0] - mean).abs() < 1e-9);
    assert!((sol.theta[1] - var).abs() < 1e-9);
    let s = sandwich(&sys, &sol.theta, &SolveConfig::default()).unwrap();
    // Var(s2_hat) is approximately (m4 - s2^2) / n
    assert!((s.standard_errors[1] - ((m4 - var * var) / n).sqrt()).abs() < 1e-6);
    assert!((s.standard_errors[0] - (var / n).sqrt()).abs() < 1e-9);
    let f = meat(&sys, &sol.theta).unwrap();
    assert_eq!(f, f.transpose());
    let b = bread(&sys, &sol.theta, &SolveConfig::default()).unwrap();
    assert!((b[(0, 0)] - 1.0).abs() < 1e-8 && (b[(1, 1)] - 1.0).abs() < 1e-8);
}

/// Unit-level equations that cannot be jointly solved: `psi = (1, theta)`.
struct NoRoot;

impl EstimatingSystem for NoRoot {
    fn n_units(&self) -> usize {
        3
    }
    fn dim(&self) -> usize {
        1
    }
    fn psi(&self, _unit: usize, theta: &[f64], out: &mut [f64]) {
        out[0] = theta[0] * theta[0] + 1.0;
    }
}

#[test]
fn rootless_system_fails_without_panicking() {
    let err = solve_estimating_equations(&NoRoot, &[0.3], &SolveConfig::default()).unwrap_err();
    assert!(matches!(
        err,
        MestError::ConvergenceFailure { .. } | MestError::SingularJacobian { .. }
    ));
}
