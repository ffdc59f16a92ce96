#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sparsefolio::market_data::{ReturnPanel, YearMonth};
use sparsefolio::{AffineConstraints, PenalizedProblem};

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| StandardNormal.sample(rng))
}

/// Random least-squares instance with `m` random constraint rows.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, t: usize, m: usize) -> (PenalizedProblem, AffineConstraints) {
    let design = gaussian_matrix(rng, t, n);
    let target = gaussian_vector(rng, t);
    let problem = PenalizedProblem::new(design, target).unwrap();
    let constraints = if m == 0 {
        AffineConstraints::none(n)
    } else {
        let a = gaussian_matrix(rng, m, n);
        let x = gaussian_vector(rng, n);
        let rhs = &a * x;
        AffineConstraints::new(a, rhs).unwrap()
    };
    (problem, constraints)
}

/// Markowitz-shaped instance: returns panel `R`, target `rho * 1`, rows
/// `(mu^T, rho)` and `(1^T, 1)`.
pub fn markowitz_instance(rng: &mut ChaCha8Rng, n: usize, t: usize) -> (PenalizedProblem, AffineConstraints) {
    let mut r = gaussian_matrix(rng, t, n) * 0.2;
    for mut col in r.column_iter_mut() {
        let drift: f64 = rng.random_range(0.0..0.2);
        col.add_scalar_mut(drift);
    }
    let mu = DVector::from_fn(n, |i, _| r.column(i).mean());
    let rho = mu.mean();
    let problem = PenalizedProblem::new(r, DVector::from_element(t, rho)).unwrap();
    let mut a = DMatrix::zeros(2, n);
    for i in 0..n {
        a[(0, i)] = mu[i];
        a[(1, i)] = 1.0;
    }
    let constraints = AffineConstraints::new(a, DVector::from_vec(vec![rho, 1.0])).unwrap();
    (problem, constraints)
}

/// Largest KKT violation of `w` (with multipliers) at `tau`, and the
/// constraint residual.
pub fn kkt_violation(
    problem: &PenalizedProblem,
    constraints: &AffineConstraints,
    w: &DVector<f64>,
    lambda: &DVector<f64>,
    tau: f64,
) -> (f64, f64) {
    let r = problem.design();
    let mut b = r.transpose() * (problem.target() - r * w);
    if !constraints.is_empty() {
        b += constraints.matrix().transpose() * lambda;
    }
    let s = problem.penalty_weights();
    let mut worst = 0.0f64;
    for i in 0..w.len() {
        let bi = b[i] / s[i];
        let v = if w[i] != 0.0 {
            (bi - w[i].signum() * tau / 2.0).abs()
        } else {
            (bi.abs() - tau / 2.0).max(0.0)
        };
        worst = worst.max(v);
    }
    (worst, constraints.residual_inf(w))
}

pub fn l1(w: &DVector<f64>) -> f64 {
    w.iter().map(|x| x.abs()).sum()
}

/// Synthetic one-factor panel of annualized monthly returns starting at `start`.
pub fn synthetic_panel(rng: &mut ChaCha8Rng, n: usize, months: usize, start: YearMonth) -> ReturnPanel {
    let betas: Vec<f64> = (0..n).map(|_| rng.random_range(0.6..1.4)).collect();
    let alphas: Vec<f64> = (0..n).map(|_| rng.random_range(-0.02..0.06)).collect();
    let mut r = DMatrix::zeros(months, n);
    for t in 0..months {
        let f: f64 = StandardNormal.sample(rng);
        for j in 0..n {
            let e: f64 = StandardNormal.sample(rng);
            r[(t, j)] = alphas[j] + 0.08 + betas[j] * 0.5 * f + 0.3 * e;
        }
    }
    let dates = (0..months).map(|k| start.add_months(k as i64)).collect();
    let names = (0..n).map(|j| format!("Ind{j}")).collect();
    ReturnPanel::new(r, dates, names).unwrap()
}
