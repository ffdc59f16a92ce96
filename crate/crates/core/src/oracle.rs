//! Slow reference solvers used to certify the path solvers.
//!
//! None of this shares code with the homotopy: the linear algebra goes
//! through dense pseudo-inverses of the full KKT systems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::{AffineConstraints, PenalizedProblem};

/// Largest problem handled by the enumerating oracles.
pub const MAX_ENUMERATION_ASSETS: usize = 12;

/// A KKT point found by sign-pattern enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCandidate {
    pub weights: DVector<f64>,
    pub objective: f64,
    /// The pattern's linear system determined the weights uniquely.
    pub determined: bool,
}

/// All sign patterns whose KKT system is consistent at one tau.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub candidates: Vec<OracleCandidate>,
}

impl OracleSolution {
    /// Candidate with the smallest objective.
    pub fn best(&self) -> &OracleCandidate {
        self.candidates
            .iter()
            .min_by(|a, b| a.objective.total_cmp(&b.objective))
            .expect("solution holds at least one candidate")
    }

    /// True when every candidate agrees with the best one to `tol` and was
    /// pinned down by its own system, i.e. the minimizer is unique.
    pub fn is_unique(&self, tol: f64) -> bool {
        let best = self.best();
        self.candidates
            .iter()
            .all(|c| c.determined && (&c.weights - &best.weights).amax() <= tol)
    }
}

/// Factorized KKT system for one support.
struct SupportSystem {
    support: Vec<usize>,
    pinv: DMatrix<f64>,
    matrix: DMatrix<f64>,
    full_rank: bool,
    /// `[R_P^T y; a]`.
    base: DVector<f64>,
}

/// Precomputed sign-pattern systems of one instance, reusable across tau.
pub struct SignEnumerator {
    problem: PenalizedProblem,
    constraints: AffineConstraints,
    gram: DMatrix<f64>,
    cty: DVector<f64>,
    systems: Vec<SupportSystem>,
}

impl SignEnumerator {
    pub fn new(problem: &PenalizedProblem, constraints: &AffineConstraints) -> Result<Self> {
        let n = problem.n_assets();
        if n > MAX_ENUMERATION_ASSETS {
            return Err(Error::InvalidProblem(format!(
                "sign enumeration supports at most {MAX_ENUMERATION_ASSETS} assets"
            )));
        }
        if constraints.n_vars() != n && !constraints.is_empty() {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: constraints.n_vars(),
            });
        }
        let r = problem.design();
        let gram = r.transpose() * r;
        let cty = r.transpose() * problem.target();
        let m = constraints.n_rows();
        let mut systems = Vec::with_capacity(1 << n);
        for mask in 0u32..(1 << n) {
            let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let k = support.len();
            let mut mat = DMatrix::zeros(k + m, k + m);
            for (a, &i) in support.iter().enumerate() {
                for (b, &j) in support.iter().enumerate() {
                    mat[(a, b)] = gram[(i, j)];
                }
                for row in 0..m {
                    let v = constraints.matrix()[(row, i)];
                    mat[(a, k + row)] = -v;
                    mat[(k + row, a)] = v;
                }
            }
            let mut base = DVector::zeros(k + m);
            for (a, &i) in support.iter().enumerate() {
                base[a] = cty[i];
            }
            for row in 0..m {
                base[k + row] = constraints.rhs()[row];
            }
            if k + m == 0 {
                systems.push(SupportSystem {
                    support,
                    pinv: DMatrix::zeros(0, 0),
                    matrix: mat,
                    full_rank: true,
                    base,
                });
                continue;
            }
            let svd = mat.clone().svd(true, true);
            let smax = svd.singular_values.max();
            let cutoff = smax * 1e-12;
            let full_rank = smax > 0.0 && svd.singular_values.min() > cutoff;
            let pinv = svd
                .pseudo_inverse(cutoff.max(f64::MIN_POSITIVE))
                .map_err(|e| Error::InvalidProblem(e.to_string()))?;
            systems.push(SupportSystem {
                support,
                pinv,
                matrix: mat,
                full_rank,
                base,
            });
        }
        Ok(Self {
            problem: problem.clone(),
            constraints: constraints.clone(),
            gram,
            cty,
            systems,
        })
    }

    /// Every consistent sign pattern at `tau`.
    pub fn solve(&self, tau: f64) -> Result<OracleSolution> {
        let n = self.problem.n_assets();
        let m = self.constraints.n_rows();
        let s = self.problem.penalty_weights();
        let c = tau / 2.0;
        let scale = self.cty.amax().max(self.constraints.rhs().amax()).max(1.0);
        let mut candidates = Vec::new();
        for sys in &self.systems {
            let k = sys.support.len();
            for signs in 0u32..(1 << k) {
                let mut rhs = sys.base.clone();
                let mut sigma = vec![0.0; k];
                for (a, &i) in sys.support.iter().enumerate() {
                    sigma[a] = if signs & (1 << a) != 0 { -1.0 } else { 1.0 };
                    rhs[a] -= c * s[i] * sigma[a];
                }
                let x = &sys.pinv * &rhs;
                if !sys.full_rank {
                    let resid = (&sys.matrix * &x - &rhs).amax();
                    if resid > 1e-9 * (1.0 + rhs.amax()) {
                        continue;
                    }
                }
                let mut w = DVector::zeros(n);
                let wscale = x.rows(0, k).amax().max(1.0);
                let mut ok = true;
                for (a, &i) in sys.support.iter().enumerate() {
                    if x[a] * sigma[a] < -1e-10 * wscale {
                        ok = false;
                        break;
                    }
                    w[i] = x[a];
                }
                if !ok {
                    continue;
                }
                let lambda = x.rows(k, m).into_owned();
                let mut b = &self.cty - &self.gram * &w;
                if m > 0 {
                    b += self.constraints.matrix().transpose() * &lambda;
                }
                let off_ok = (0..n)
                    .filter(|i| !sys.support.contains(i))
                    .all(|i| b[i].abs() <= c * s[i] + 1e-9 * scale);
                if !off_ok {
                    continue;
                }
                if m > 0 && self.constraints.residual_inf(&w) > 1e-9 * (1.0 + self.constraints.rhs().amax()) {
                    continue;
                }
                let objective = self.problem.objective(&w, tau);
                candidates.push(OracleCandidate {
                    weights: w,
                    objective,
                    determined: sys.full_rank,
                });
            }
        }
        if candidates.is_empty() {
            return Err(Error::NoFeasiblePattern);
        }
        Ok(OracleSolution { candidates })
    }
}

/// Minimizer at `tau` by trying every sign pattern in `{-, 0, +}^N`.
pub fn oracle_sign_enumeration(
    problem: &PenalizedProblem,
    constraints: &AffineConstraints,
    tau: f64,
) -> Result<OracleSolution> {
    SignEnumerator::new(problem, constraints)?.solve(tau)
}

/// Settings of the iterative oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentOptions {
    /// Iterations per penalty stage.
    pub iterations: usize,
    /// Final weight of the constraint penalty is `1 / epsilon`.
    pub epsilon: f64,
    /// Step size; `None` uses the inverse Lipschitz constant.
    pub step: Option<f64>,
    /// Convergence threshold on the largest weight change per iteration.
    pub tol: f64,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            iterations: 200_000,
            epsilon: 1e-8,
            step: None,
            tol: 1e-13,
        }
    }
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Approximate minimizer of `(1/eps) |A w - a|^2 + |R w - y|^2 + tau sum s_i |w_i|`
/// by accelerated proximal gradient, tightening `eps` geometrically.
pub fn oracle_projected_descent(
    problem: &PenalizedProblem,
    constraints: &AffineConstraints,
    tau: f64,
    options: &DescentOptions,
) -> Result<DVector<f64>> {
    if options.iterations == 0 {
        return Err(Error::InvalidProblem("iterations must be at least 1".into()));
    }
    let r = problem.design();
    let n = problem.n_assets();
    let gram = r.transpose() * r;
    let cty = r.transpose() * problem.target();
    let s = problem.penalty_weights();
    let (ata, ata_rhs) = if constraints.is_empty() {
        (DMatrix::zeros(n, n), DVector::zeros(n))
    } else {
        let a = constraints.matrix();
        (a.transpose() * a, a.transpose() * constraints.rhs())
    };
    let top = |m: &DMatrix<f64>| m.symmetric_eigenvalues().max().max(0.0);
    let (g_top, a_top) = (top(&gram), top(&ata));

    let mut stages = vec![];
    if constraints.is_empty() {
        stages.push(1.0);
    } else {
        let mut eps = 1.0f64;
        while eps > options.epsilon {
            stages.push(eps);
            eps *= 0.1;
        }
        stages.push(options.epsilon);
    }

    let mut w = DVector::zeros(n);
    let mut last_change = f64::INFINITY;
    for &eps in &stages {
        let hess = &gram * 2.0 + &ata * (2.0 / eps);
        let lin = &cty * 2.0 + &ata_rhs * (2.0 / eps);
        let lipschitz = 2.0 * g_top + 2.0 * a_top / eps;
        let step = options.step.unwrap_or(1.0 / lipschitz.max(f64::MIN_POSITIVE));
        let mut z = w.clone();
        let mut t = 1.0f64;
        last_change = f64::INFINITY;
        for _ in 0..options.iterations {
            let grad = &hess * &z - &lin;
            let mut next = &z - grad * step;
            for i in 0..n {
                next[i] = soft_threshold(next[i], step * tau * s[i]);
            }
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let delta = &next - &w;
            // Restart the momentum when it points uphill.
            if (&z - &next).dot(&delta) > 0.0 {
                t = 1.0;
                z = next.clone();
            } else {
                z = &next + &delta * ((t - 1.0) / t_next);
                t = t_next;
            }
            last_change = delta.amax();
            w = next;
            if last_change <= options.tol * (1.0 + w.amax()) {
                break;
            }
        }
    }
    if !(last_change <= options.tol * 1e3 * (1.0 + w.amax())) {
        return Err(Error::NotConverged { last_change });
    }
    Ok(w)
}

/// `min |R w - y|^2` subject to `A w = a`, `w >= 0`, by enumerating the
/// support of `w`.
pub fn oracle_nonnegative_qp(problem: &PenalizedProblem, constraints: &AffineConstraints) -> Result<DVector<f64>> {
    let n = problem.n_assets();
    if n > MAX_ENUMERATION_ASSETS {
        return Err(Error::InvalidProblem(format!(
            "support enumeration supports at most {MAX_ENUMERATION_ASSETS} assets"
        )));
    }
    let r = problem.design();
    let gram = r.transpose() * r;
    let cty = r.transpose() * problem.target();
    let m = constraints.n_rows();
    let scale = cty.amax().max(1.0);
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let k = support.len();
        let mut mat = DMatrix::zeros(k + m, k + m);
        let mut rhs = DVector::zeros(k + m);
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                mat[(a, b)] = gram[(i, j)];
            }
            for row in 0..m {
                let v = constraints.matrix()[(row, i)];
                mat[(a, k + row)] = -v;
                mat[(k + row, a)] = v;
            }
            rhs[a] = cty[i];
        }
        for row in 0..m {
            rhs[k + row] = constraints.rhs()[row];
        }
        let svd = mat.clone().svd(true, true);
        let cutoff = svd.singular_values.max() * 1e-12;
        let Ok(x) = svd.solve(&rhs, cutoff) else {
            continue;
        };
        if (&mat * &x - &rhs).amax() > 1e-9 * (1.0 + rhs.amax()) {
            continue;
        }
        let mut w = DVector::zeros(n);
        for (a, &i) in support.iter().enumerate() {
            w[i] = x[a];
        }
        if w.iter().any(|&v| v < -1e-12 * (1.0 + w.amax())) {
            continue;
        }
        w.apply(|v| *v = v.max(0.0));
        let nu = x.rows(k, m).into_owned();
        // Multipliers of w >= 0 off the support: -(grad/2) + A^T nu <= 0.
        let mut g = &cty - &gram * &w;
        if m > 0 {
            g += constraints.matrix().transpose() * &nu;
        }
        if (0..n).any(|i| !support.contains(&i) && g[i] > 1e-9 * scale) {
            continue;
        }
        let obj = problem.residual_sq(&w);
        if best.as_ref().is_none_or(|(o, _)| obj < *o) {
            best = Some((obj, w));
        }
    }
    best.map(|(_, w)| w).ok_or(Error::NoFeasiblePattern)
}
