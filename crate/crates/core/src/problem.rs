//! Problem definitions shared by the path solvers.

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Largest accepted condition number of the constraint matrix.
pub const MAX_CONSTRAINT_CONDITION: f64 = 1e12;

/// Least-squares residual above which constraints are declared infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-10;

/// Weighted l1-penalized least squares:
/// `min_w |design * w - target|^2 + tau * sum_i s_i |w_i|` for `tau >= tau_stop`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedProblem {
    design: DMatrix<f64>,
    target: DVector<f64>,
    penalty_weights: DVector<f64>,
    tau_stop: f64,
}

impl PenalizedProblem {
    /// Plain l1 penalty (all weights one), path down to `tau = 0`.
    pub fn new(design: DMatrix<f64>, target: DVector<f64>) -> Result<Self> {
        let n = design.ncols();
        Self::with_weights(design, target, DVector::from_element(n, 1.0), 0.0)
    }

    pub fn with_weights(
        design: DMatrix<f64>,
        target: DVector<f64>,
        penalty_weights: DVector<f64>,
        tau_stop: f64,
    ) -> Result<Self> {
        if design.nrows() == 0 || design.ncols() == 0 {
            return Err(Error::InvalidProblem("design matrix is empty".into()));
        }
        if target.len() != design.nrows() {
            return Err(Error::LengthMismatch {
                expected: design.nrows(),
                actual: target.len(),
            });
        }
        if penalty_weights.len() != design.ncols() {
            return Err(Error::LengthMismatch {
                expected: design.ncols(),
                actual: penalty_weights.len(),
            });
        }
        if design.iter().chain(target.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidProblem("non-finite entry in design or target".into()));
        }
        for (i, col) in design.column_iter().enumerate() {
            if col.iter().all(|&x| x == 0.0) {
                return Err(Error::InvalidProblem(format!("design column {i} is identically zero")));
            }
        }
        if let Some(i) = penalty_weights.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidProblem(format!("penalty weight {i} is not strictly positive")));
        }
        if !(tau_stop >= 0.0 && tau_stop.is_finite()) {
            return Err(Error::InvalidProblem("tau_stop must be a finite nonnegative number".into()));
        }
        Ok(Self {
            design,
            target,
            penalty_weights,
            tau_stop,
        })
    }

    pub fn with_tau_stop(mut self, tau_stop: f64) -> Result<Self> {
        if !(tau_stop >= 0.0 && tau_stop.is_finite()) {
            return Err(Error::InvalidProblem("tau_stop must be a finite nonnegative number".into()));
        }
        self.tau_stop = tau_stop;
        Ok(self)
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    pub fn penalty_weights(&self) -> &DVector<f64> {
        &self.penalty_weights
    }

    pub fn tau_stop(&self) -> f64 {
        self.tau_stop
    }

    pub fn n_assets(&self) -> usize {
        self.design.ncols()
    }

    pub fn n_obs(&self) -> usize {
        self.design.nrows()
    }

    pub fn has_unit_weights(&self) -> bool {
        self.penalty_weights.iter().all(|&s| s == 1.0)
    }

    /// Design with column `i` divided by `s_i`; the weighted problem is the
    /// plain-l1 problem in the variable `s_i * w_i`.
    pub fn rescaled_design(&self) -> DMatrix<f64> {
        let mut d = self.design.clone();
        for (i, mut col) in d.column_iter_mut().enumerate() {
            col /= self.penalty_weights[i];
        }
        d
    }

    /// Squared residual `|design * w - target|^2`.
    pub fn residual_sq(&self, w: &DVector<f64>) -> f64 {
        (&self.design * w - &self.target).norm_squared()
    }

    /// Weighted l1 norm `sum_i s_i |w_i|`.
    pub fn penalty(&self, w: &DVector<f64>) -> f64 {
        w.iter()
            .zip(self.penalty_weights.iter())
            .map(|(x, s)| s * x.abs())
            .sum()
    }

    pub fn objective(&self, w: &DVector<f64>, tau: f64) -> f64 {
        self.residual_sq(w) + tau * self.penalty(w)
    }

    pub(crate) fn hash_into(&self, hasher: &mut Sha256) {
        hasher.update(b"problem");
        hash_matrix(hasher, &self.design);
        hash_slice(hasher, self.target.as_slice());
        hash_slice(hasher, self.penalty_weights.as_slice());
        hasher.update(self.tau_stop.to_bits().to_le_bytes());
    }
}

/// Affine feasible set `{w : matrix * w = rhs}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineConstraints {
    matrix: DMatrix<f64>,
    rhs: DVector<f64>,
}

impl AffineConstraints {
    /// Validates feasibility and row independence.
    pub fn new(matrix: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self> {
        if rhs.len() != matrix.nrows() {
            return Err(Error::LengthMismatch {
                expected: matrix.nrows(),
                actual: rhs.len(),
            });
        }
        if matrix.iter().chain(rhs.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidProblem("non-finite entry in constraints".into()));
        }
        let m = matrix.nrows();
        if m == 0 {
            return Ok(Self { matrix, rhs });
        }
        let svd = matrix.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if smax == 0.0 {
            let residual = rhs.norm();
            if residual > FEASIBILITY_TOL {
                return Err(Error::InfeasibleConstraints { residual });
            }
            return Err(Error::DependentConstraints { condition: f64::INFINITY });
        }
        let x = svd
            .solve(&rhs, smax * 1e-13)
            .map_err(|e| Error::InvalidProblem(e.to_string()))?;
        let residual = (&matrix * &x - &rhs).norm();
        if residual > FEASIBILITY_TOL * (1.0 + rhs.norm()) {
            return Err(Error::InfeasibleConstraints { residual });
        }
        let smin = if m > matrix.ncols() {
            0.0
        } else {
            svd.singular_values.min()
        };
        let condition = smax / smin;
        if !(condition <= MAX_CONSTRAINT_CONDITION) {
            return Err(Error::DependentConstraints { condition });
        }
        Ok(Self { matrix, rhs })
    }

    /// No constraints on `n` variables.
    pub fn none(n: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(0, n),
            rhs: DVector::zeros(0),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    /// `max_k |(A w - a)_k|`.
    pub fn residual_inf(&self, w: &DVector<f64>) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        (&self.matrix * w - &self.rhs).amax()
    }

    pub(crate) fn hash_into(&self, hasher: &mut Sha256) {
        hasher.update(b"constraints");
        hash_matrix(hasher, &self.matrix);
        hash_slice(hasher, self.rhs.as_slice());
    }
}

fn hash_matrix(hasher: &mut Sha256, m: &DMatrix<f64>) {
    hasher.update((m.nrows() as u64).to_le_bytes());
    hasher.update((m.ncols() as u64).to_le_bytes());
    hash_slice(hasher, m.as_slice());
}

fn hash_slice(hasher: &mut Sha256, xs: &[f64]) {
    hasher.update((xs.len() as u64).to_le_bytes());
    for x in xs {
        hasher.update(x.to_bits().to_le_bytes());
    }
}

/// Hex digest identifying a (problem, constraints) pair.
pub fn fingerprint(problem: &PenalizedProblem, constraints: Option<&AffineConstraints>) -> String {
    let mut hasher = Sha256::new();
    problem.hash_into(&mut hasher);
    if let Some(c) = constraints.filter(|c| !c.is_empty()) {
        c.hash_into(&mut hasher);
    }
    let digest = hasher.finalize();
    digest[..16].iter().map(|b| format!("{b:02x}")).collect()
}
