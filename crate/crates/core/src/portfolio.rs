//! Markowitz-form problems built from return panels, portfolio selection
//! along constrained paths, and the tracking, hedging and adjustment
//! variants.

use nalgebra::{DMatrix, DVector};

use crate::constrained::solve_constrained_path_with;
use crate::error::{Error, Result};
use crate::homotopy::{solve_path_with, PathOptions};
use crate::market_data::ReturnPanel;
use crate::path::{PathBreakpoint, SolutionPath};
use crate::problem::{fingerprint, AffineConstraints, PenalizedProblem};

/// Paths over more assets than this stop once this many are active.
pub const MAX_PORTFOLIO_ACTIVE: usize = 60;

/// Start weights this close below zero are rounding noise and clamped.
const NONNEGATIVE_TOL: f64 = 1e-12;

/// Relative tolerance under which two binned objectives count as tied.
const BIN_TIE_RTOL: f64 = 1e-12;

/// Accepted deviation of the current portfolio's budget from one.
const BUDGET_TOL: f64 = 1e-10;

/// Adjustment constraint residuals below this are snapped to zero.
const SNAP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MarkowitzSpec {
    /// Target return, in the panel's units.
    pub target_return: f64,
    pub training_panel: ReturnPanel,
    /// `None` means all ones.
    pub penalty_weights: Option<DVector<f64>>,
}

impl MarkowitzSpec {
    pub fn new(training_panel: ReturnPanel, target_return: f64) -> Self {
        Self {
            target_return,
            training_panel,
            penalty_weights: None,
        }
    }

    /// Targets the average return of the evenly weighted portfolio over the window.
    pub fn equal_weight_target(training_panel: ReturnPanel) -> Self {
        let rho = equal_weight_return(&training_panel);
        Self::new(training_panel, rho)
    }

    pub fn with_penalty_weights(mut self, weights: DVector<f64>) -> Self {
        self.penalty_weights = Some(weights);
        self
    }

    fn weights(&self) -> DVector<f64> {
        self.penalty_weights
            .clone()
            .unwrap_or_else(|| DVector::from_element(self.training_panel.n_assets(), 1.0))
    }
}

/// Mean over the window of the 1/N portfolio's return.
pub fn equal_weight_return(panel: &ReturnPanel) -> f64 {
    panel.column_means().mean()
}

/// `min |rho 1 - R w|^2 + tau sum s_i |w_i|` subject to `mu^T w = rho` and `1^T w = 1`.
/// A one-asset panel keeps only the budget row.
pub fn build_markowitz_problem(spec: &MarkowitzSpec) -> Result<(PenalizedProblem, AffineConstraints)> {
    shifted_markowitz_problem(spec, None)
}

/// Markowitz problem in `dw = w - current`, without checking the budget of `current`.
fn shifted_markowitz_problem(
    spec: &MarkowitzSpec,
    current: Option<&DVector<f64>>,
) -> Result<(PenalizedProblem, AffineConstraints)> {
    let panel = &spec.training_panel;
    let (t, n) = (panel.n_periods(), panel.n_assets());
    if t < 2 {
        return Err(Error::InvalidProblem(format!("training panel has {t} periods, need at least 2")));
    }
    let rho = spec.target_return;
    if !rho.is_finite() {
        return Err(Error::InvalidProblem("target return is not finite".into()));
    }
    let mu = panel.column_means();
    if n >= 2 && mu.iter().all(|&m| m == mu[0]) {
        return Err(Error::DegeneratePanel("all assets have the same mean return".into()));
    }
    let (lo, hi) = (mu.min(), mu.max());
    if rho < lo || rho > hi {
        log::warn!("target return {rho} lies outside the asset means [{lo}, {hi}]");
    }

    let matrix = if n == 1 {
        DMatrix::from_element(1, 1, 1.0)
    } else {
        let mut a = DMatrix::from_element(2, n, 1.0);
        a.row_mut(0).copy_from(&mu.transpose());
        a
    };
    let mut rhs = if n == 1 {
        DVector::from_element(1, 1.0)
    } else {
        DVector::from_vec(vec![rho, 1.0])
    };
    let mut target = DVector::from_element(t, rho);
    if let Some(c) = current {
        if c.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: c.len(),
            });
        }
        target -= panel.returns() * c;
        rhs -= &matrix * c;
        for r in rhs.iter_mut() {
            if r.abs() <= SNAP_TOL {
                *r = 0.0;
            }
        }
    }

    let constraints = AffineConstraints::new(matrix, rhs).map_err(|e| match e {
        Error::DependentConstraints { condition } => {
            Error::DegeneratePanel(format!("constraint rows are nearly dependent (condition {condition:.3e})"))
        }
        other => other,
    })?;
    let problem = PenalizedProblem::with_weights(panel.returns().clone(), target, spec.weights(), 0.0)?;
    Ok((problem, constraints))
}

/// Adjustment `dw` of an existing portfolio: target `rho 1 - R current`,
/// constraints `mu^T dw = rho - mu^T current` and `1^T dw = 0`.
pub fn build_adjustment_problem(
    current: &DVector<f64>,
    spec: &MarkowitzSpec,
) -> Result<(PenalizedProblem, AffineConstraints)> {
    let sum = current.sum();
    if !((sum - 1.0).abs() <= BUDGET_TOL) {
        return Err(Error::CurrentPortfolioInvalid { sum });
    }
    shifted_markowitz_problem(spec, Some(current))
}

/// Like [`build_adjustment_problem`] but accepts any starting holdings; the
/// constraint right-hand side absorbs the budget gap.
pub fn build_shifted_problem(
    current: &DVector<f64>,
    spec: &MarkowitzSpec,
) -> Result<(PenalizedProblem, AffineConstraints)> {
    shifted_markowitz_problem(spec, Some(current))
}

/// Path options used for portfolio problems.
pub fn portfolio_path_options(n_assets: usize) -> PathOptions {
    PathOptions {
        max_active: (n_assets > MAX_PORTFOLIO_ACTIVE).then_some(MAX_PORTFOLIO_ACTIVE),
        ..PathOptions::default()
    }
}

/// A solved constrained path together with the problem it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioPath {
    pub problem: PenalizedProblem,
    pub constraints: AffineConstraints,
    pub path: SolutionPath,
}

impl PortfolioPath {
    pub fn solve(problem: PenalizedProblem, constraints: AffineConstraints) -> Result<Self> {
        let options = portfolio_path_options(problem.n_assets());
        let path = if constraints.is_empty() {
            solve_path_with(&problem, &options)?
        } else {
            solve_constrained_path_with(&problem, &constraints, &options)?
        };
        Ok(Self {
            problem,
            constraints,
            path,
        })
    }

    pub fn from_markowitz(spec: &MarkowitzSpec) -> Result<Self> {
        let (p, c) = build_markowitz_problem(spec)?;
        Self::solve(p, c)
    }

    /// Pairs a previously computed path with its problem.
    pub fn from_parts(problem: PenalizedProblem, constraints: AffineConstraints, path: SolutionPath) -> Result<Self> {
        let c = (!constraints.is_empty()).then_some(&constraints);
        if fingerprint(&problem, c) != path.problem_fingerprint {
            return Err(Error::PathMismatch);
        }
        Ok(Self {
            problem,
            constraints,
            path,
        })
    }

    fn selection(&self, bp: &PathBreakpoint, weights: DVector<f64>, policy: SelectionPolicy) -> PortfolioSelection {
        PortfolioSelection {
            active_count: weights.iter().filter(|&&x| x != 0.0).count(),
            objective_value: self.problem.residual_sq(&weights),
            weights,
            tau: bp.tau,
            policy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionPolicy {
    NoShort,
    ExactK(usize),
    Binned(usize, usize),
}

impl SelectionPolicy {
    pub fn label(&self) -> String {
        match self {
            SelectionPolicy::NoShort => "no-short".into(),
            SelectionPolicy::ExactK(k) => format!("exact-{k}"),
            SelectionPolicy::Binned(a, b) => format!("bin-{a}-{b}"),
        }
    }

    pub fn select(&self, path: &PortfolioPath) -> Result<PortfolioSelection> {
        match *self {
            SelectionPolicy::NoShort => select_no_short(path),
            SelectionPolicy::ExactK(k) => select_exact_k(path, k),
            SelectionPolicy::Binned(a, b) => select_binned(path, a, b),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioSelection {
    pub weights: DVector<f64>,
    pub tau: f64,
    pub policy: SelectionPolicy,
    pub active_count: usize,
    /// Unpenalized `|rho 1 - R w|^2`.
    pub objective_value: f64,
}

/// The path start: the optimal portfolio without short positions.
pub fn select_no_short(path: &PortfolioPath) -> Result<PortfolioSelection> {
    let bp = path.path.start();
    let min_weight = bp.weights.min();
    if min_weight < -NONNEGATIVE_TOL {
        return Err(Error::NotNonnegativeStart { min_weight });
    }
    let weights = bp.weights.map(|x| if x < 0.0 { 0.0 } else { x });
    Ok(path.selection(bp, weights, SelectionPolicy::NoShort))
}

/// First breakpoint (largest tau) with exactly `k` active assets.
pub fn select_exact_k(path: &PortfolioPath, k: usize) -> Result<PortfolioSelection> {
    let bp = path
        .path
        .breakpoints
        .iter()
        .find(|b| b.active_count() == k)
        .ok_or(Error::CardinalityUnreachable { k })?;
    Ok(path.selection(bp, bp.weights.clone(), SelectionPolicy::ExactK(k)))
}

/// Breakpoint with `k_min..=k_max` active assets and the smallest unpenalized
/// objective; ties go to the smaller l1 norm, then to the larger tau.
pub fn select_binned(path: &PortfolioPath, k_min: usize, k_max: usize) -> Result<PortfolioSelection> {
    if k_min > k_max {
        return Err(Error::InvalidProblem(format!("empty range {k_min}..{k_max}")));
    }
    let mut best: Option<(&PathBreakpoint, f64, f64)> = None;
    for bp in &path.path.breakpoints {
        let k = bp.active_count();
        if k < k_min || k > k_max {
            continue;
        }
        let obj = path.problem.residual_sq(&bp.weights);
        let l1 = bp.l1_norm();
        let better = match best {
            None => true,
            Some((_, bo, bl)) => {
                let tie = (obj - bo).abs() <= BIN_TIE_RTOL * obj.abs().max(bo.abs());
                if tie {
                    l1 < bl
                } else {
                    obj < bo
                }
            }
        };
        // Breakpoints come in decreasing tau, so keeping the incumbent on a
        // full tie prefers the larger tau.
        if better {
            best = Some((bp, obj, l1));
        }
    }
    let (bp, _, _) = best.ok_or(Error::EmptyBin { k_min, k_max })?;
    Ok(path.selection(bp, bp.weights.clone(), SelectionPolicy::Binned(k_min, k_max)))
}

/// Index tracking: `min |index - R w|^2 + tau sum s_i |w_i|`.
pub fn build_tracking_problem(
    index_returns: &DVector<f64>,
    panel: &ReturnPanel,
    spreads: &DVector<f64>,
) -> Result<PenalizedProblem> {
    if index_returns.len() != panel.n_periods() {
        return Err(Error::LengthMismatch {
            expected: panel.n_periods(),
            actual: index_returns.len(),
        });
    }
    PenalizedProblem::with_weights(panel.returns().clone(), index_returns.clone(), spreads.clone(), 0.0)
}

/// Scenario description for hedging an existing position with `N` instruments.
#[derive(Debug, Clone, PartialEq)]
pub struct HedgingScenario {
    /// Change in value of the existing position per scenario.
    pub pnl_existing: DVector<f64>,
    /// `M x N`: change in value of one unit of each instrument per scenario.
    pub pnl_unit: DMatrix<f64>,
    pub probabilities: DVector<f64>,
    /// Per-instrument transaction cost.
    pub spreads: DVector<f64>,
}

impl HedgingScenario {
    pub fn new(
        pnl_existing: DVector<f64>,
        pnl_unit: DMatrix<f64>,
        probabilities: DVector<f64>,
        spreads: DVector<f64>,
    ) -> Result<Self> {
        let m = pnl_unit.nrows();
        for len in [pnl_existing.len(), probabilities.len()] {
            if len != m {
                return Err(Error::LengthMismatch { expected: m, actual: len });
            }
        }
        if spreads.len() != pnl_unit.ncols() {
            return Err(Error::LengthMismatch {
                expected: pnl_unit.ncols(),
                actual: spreads.len(),
            });
        }
        if probabilities.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidProblem("scenario probabilities must be positive".into()));
        }
        let total = probabilities.sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidProblem(format!("scenario probabilities sum to {total}")));
        }
        Ok(Self {
            pnl_existing,
            pnl_unit,
            probabilities,
            spreads,
        })
    }

    /// Uniform probabilities over the scenarios.
    pub fn uniform(pnl_existing: DVector<f64>, pnl_unit: DMatrix<f64>, spreads: DVector<f64>) -> Result<Self> {
        let m = pnl_unit.nrows().max(1);
        let p = DVector::from_element(pnl_unit.nrows(), 1.0 / m as f64);
        Self::new(pnl_existing, pnl_unit, p, spreads)
    }
}

/// Hedging: `min |P (y + X w)|^2 + tau sum s_i |w_i|` with `P = diag(sqrt(p))`.
pub fn build_hedging_problem(scenario: &HedgingScenario) -> Result<PenalizedProblem> {
    let sqrt_p = scenario.probabilities.map(f64::sqrt);
    let mut design = scenario.pnl_unit.clone();
    for (i, mut row) in design.row_iter_mut().enumerate() {
        row *= sqrt_p[i];
    }
    let target = -scenario.pnl_existing.component_mul(&sqrt_p);
    PenalizedProblem::with_weights(design, target, scenario.spreads.clone(), 0.0)
}
