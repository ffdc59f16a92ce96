//! Small dense solves used by the path solvers.

use nalgebra::{DMatrix, DVector};

/// Reciprocal condition estimate below which an SPD system counts as singular.
const SPD_RCOND: f64 = 1e-13;

/// Relative singular-value cutoff deciding the rank of a constraint block.
const RANK_RTOL: f64 = 1e-10;

pub(crate) fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub(crate) fn columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

/// Solves `m x = rhs` for symmetric positive definite `m`, refusing
/// numerically singular matrices.
pub(crate) fn spd_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if m.nrows() == 0 {
        return Some(DVector::zeros(0));
    }
    let chol = m.clone().cholesky()?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    if !(lo > 0.0) || (lo / hi).powi(2) < SPD_RCOND {
        return None;
    }
    Some(chol.solve(rhs))
}

/// Orthogonal split of `R^k` into the row space and null space of a
/// constraint block `B` (rows = constraints, cols = active indices).
pub(crate) struct ConstraintSplit {
    /// Orthonormal basis of `null(B)`, `k x q`.
    pub null: DMatrix<f64>,
    /// Right singular vectors spanning the row space, `k x r`.
    range_v: DMatrix<f64>,
    /// Matching left singular vectors, `m x r`.
    range_u: DMatrix<f64>,
    /// Nonzero singular values, length `r`.
    sigma: DVector<f64>,
}

impl ConstraintSplit {
    pub fn new(block: &DMatrix<f64>) -> Self {
        let (m, k) = block.shape();
        if m == 0 || k == 0 {
            return Self {
                null: DMatrix::identity(k, k),
                range_v: DMatrix::zeros(k, 0),
                range_u: DMatrix::zeros(m, 0),
                sigma: DVector::zeros(0),
            };
        }
        // Pad to at least k rows so the thin SVD returns a full right basis.
        let rows = m.max(k);
        let mut padded = DMatrix::zeros(rows, k);
        padded.view_mut((0, 0), (m, k)).copy_from(block);
        let svd = padded.svd(true, true);
        let u = svd.u.expect("requested U");
        let v_t = svd.v_t.expect("requested V^T");
        let smax = svd.singular_values.max();
        let cutoff = smax * RANK_RTOL;
        let (mut keep, mut drop) = (Vec::new(), Vec::new());
        for (i, &s) in svd.singular_values.iter().enumerate() {
            if smax > 0.0 && s > cutoff {
                keep.push(i);
            } else {
                drop.push(i);
            }
        }
        let v = v_t.transpose();
        let null = columns(&v, &drop);
        let range_v = columns(&v, &keep);
        let range_u = DMatrix::from_fn(m, keep.len(), |i, j| u[(i, keep[j])]);
        let sigma = DVector::from_iterator(keep.len(), keep.iter().map(|&i| svd.singular_values[i]));
        Self {
            null,
            range_v,
            range_u,
            sigma,
        }
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Min-norm `x` with `B^T B x = rhs` and the relative residual of that solve.
    pub fn gram_pinv_solve(&self, rhs: &DVector<f64>) -> (DVector<f64>, f64) {
        let proj = self.range_v.transpose() * rhs;
        let scaled = DVector::from_iterator(
            proj.len(),
            proj.iter().zip(self.sigma.iter()).map(|(p, s)| p / (s * s)),
        );
        let x = &self.range_v * scaled;
        // Component of rhs outside the row space is the residual of B^T B x = rhs.
        let resid = (rhs - &self.range_v * (self.range_v.transpose() * rhs)).norm();
        (x, resid / rhs.norm().max(1.0))
    }

    /// Min-norm `s` with `B^T s = rhs` and the relative residual of that solve.
    pub fn transpose_pinv_solve(&self, rhs: &DVector<f64>) -> (DVector<f64>, f64) {
        let proj = self.range_v.transpose() * rhs;
        let scaled = DVector::from_iterator(
            proj.len(),
            proj.iter().zip(self.sigma.iter()).map(|(p, s)| p / s),
        );
        let s = &self.range_u * scaled;
        let resid = (rhs - &self.range_v * (self.range_v.transpose() * rhs)).norm();
        (s, resid / rhs.norm().max(1.0))
    }
}

/// Reduced Hessian solve on `null(B)`: returns `u = Z z` with
/// `Z^T G Z z = Z^T rhs - Z^T G offset`, i.e. the correction keeping `offset + u`
/// stationary for `G` along the null space.
pub(crate) fn null_space_solve(
    gram: &DMatrix<f64>,
    split: &ConstraintSplit,
    rhs: &DVector<f64>,
) -> Option<DVector<f64>> {
    let z = &split.null;
    if z.ncols() == 0 {
        return Some(DVector::zeros(gram.nrows()));
    }
    let reduced = z.transpose() * gram * z;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let coef = spd_solve(&reduced, &(z.transpose() * rhs))?;
    Some(z * coef)
}

/// Walking direction of the multiplier phase: solves
/// `G u - B^T s = rhs`, `B u = 0` on the active block.
pub(crate) fn bordered_direction(
    gram: &DMatrix<f64>,
    block: &DMatrix<f64>,
    rhs: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let split = ConstraintSplit::new(block);
    let u = null_space_solve(gram, &split, rhs)?;
    if block.nrows() == 0 {
        return Some((u, DVector::zeros(0)));
    }
    let (s, resid) = split.transpose_pinv_solve(&(gram * &u - rhs));
    if resid > 1e-8 {
        return None;
    }
    Some((u, s))
}

/// Walking direction of the first-order phase:
/// `B^T B u0 = rhs`, `G u0 + B^T B u1 = 0`. Each equation leaves a
/// null-space component free; it is fixed by solvability of the next order,
/// `Z^T G u = 0` on `null(B)`.
pub(crate) fn first_order_direction(
    gram: &DMatrix<f64>,
    block: &DMatrix<f64>,
    rhs: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let split = ConstraintSplit::new(block);
    if split.rank() == 0 {
        return None;
    }
    let (particular, resid) = split.gram_pinv_solve(rhs);
    if resid > 1e-8 {
        return None;
    }
    let correction = null_space_solve(gram, &split, &(-(gram * &particular)))?;
    let u0 = particular + correction;
    let (u1p, resid1) = split.gram_pinv_solve(&(-(gram * &u0)));
    if resid1 > 1e-8 {
        return None;
    }
    let u1 = null_space_solve(gram, &split, &(-(gram * &u1p)))? + u1p;
    Some((u0, u1))
}
