//! Homotopy (LARS-type) continuation in tau.
//!
//! The walker works on the column-rescaled problem, where the weighted
//! penalty becomes a plain l1 penalty. With constraints it carries Lagrange
//! multipliers along; the residual correlation is then
//! `b = R^T (y - R w) + A^T lambda`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{bordered_direction, columns, spd_solve, submatrix};
use crate::path::{support, PathBreakpoint, PathEvent, SolutionPath};
use crate::problem::{fingerprint, PenalizedProblem};
use crate::ties::{resolve, TieOutcome, Violation};

/// Step quantities below this multiple of the problem scale count as zero.
pub(crate) const ZERO_RTOL: f64 = 1e-12;
/// Events closer than this multiple of the problem scale fire together.
pub(crate) const GROUP_RTOL: f64 = 1e-11;
/// Indices within this multiple of the scale of the boundary count as tied.
pub(crate) const BOUNDARY_RTOL: f64 = 1e-9;
/// Slack in the sign checks on trial directions.
const DIRECTION_TOL: f64 = 1e-10;

/// Knobs shared by both solvers.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PathOptions {
    /// Stop once this many weights are nonzero.
    pub max_active: Option<usize>,
    /// Fail with `BreakpointBudget` beyond this many breakpoints.
    /// `None` picks a budget from the problem size.
    pub max_breakpoints: Option<usize>,
    /// Breakpoint budget of the first-order start phase; `None` means `4N + 4m`.
    pub epsilon_budget: Option<usize>,
}

impl PathOptions {
    pub(crate) fn breakpoint_budget(&self, n: usize, m: usize) -> usize {
        self.max_breakpoints.unwrap_or(50 * (n + m) + 100)
    }
}

/// Smallest tau with zero minimizer: `2 max_i |(R^T y)_i| / s_i`.
pub fn initial_tau(problem: &PenalizedProblem) -> f64 {
    let cty = problem.design().transpose() * problem.target();
    2.0 * cty
        .iter()
        .zip(problem.penalty_weights().iter())
        .map(|(c, s)| (c / s).abs())
        .fold(0.0, f64::max)
}

/// Full unconstrained path from `initial_tau` down to `tau_stop`.
pub fn solve_path(problem: &PenalizedProblem) -> Result<SolutionPath> {
    solve_path_with(problem, &PathOptions::default())
}

pub fn solve_path_with(problem: &PenalizedProblem, options: &PathOptions) -> Result<SolutionPath> {
    let design = problem.rescaled_design();
    let n = design.ncols();
    let mut walker = Walker::new(&design, problem.target(), None);
    let c0 = walker.cty.amax();
    let start = WalkerState {
        w: DVector::zeros(n),
        lambda: DVector::zeros(0),
        c: c0,
    };
    let breakpoints = walker.run(start, problem.tau_stop() / 2.0, options, c0)?;
    Ok(finish(problem, None, breakpoints))
}

pub(crate) fn finish(
    problem: &PenalizedProblem,
    constraints: Option<&crate::problem::AffineConstraints>,
    mut breakpoints: Vec<PathBreakpoint>,
) -> SolutionPath {
    let s = problem.penalty_weights();
    if !problem.has_unit_weights() {
        for bp in &mut breakpoints {
            bp.weights.component_div_assign(s);
        }
    }
    SolutionPath {
        breakpoints,
        problem_fingerprint: fingerprint(problem, constraints),
    }
}

pub(crate) struct WalkerState {
    pub w: DVector<f64>,
    pub lambda: DVector<f64>,
    /// Half the current tau.
    pub c: f64,
}

struct Direction {
    u: DVector<f64>,
    s: DVector<f64>,
    /// Rate of decrease of the residual correlation per unit decrease of c.
    d: DVector<f64>,
}

/// Continuation engine on `min |D w - y|^2 + 2c |w|_1`, optionally subject
/// to `A w = a` (with `A` already rescaled). With constraints present, even
/// an empty set, directions come from the bordered system.
pub(crate) struct Walker<'a> {
    constraints: Option<&'a DMatrix<f64>>,
    gram: DMatrix<f64>,
    pub cty: DVector<f64>,
}

impl<'a> Walker<'a> {
    pub fn new(design: &DMatrix<f64>, target: &DVector<f64>, constraints: Option<&'a DMatrix<f64>>) -> Self {
        let gram = design.transpose() * design;
        let cty = design.transpose() * target;
        Self {
            constraints,
            gram,
            cty,
        }
    }

    fn n(&self) -> usize {
        self.gram.nrows()
    }

    fn residual_corr(&self, st: &WalkerState) -> DVector<f64> {
        let mut b = &self.cty - &self.gram * &st.w;
        if let Some(a) = self.constraints {
            b += a.transpose() * &st.lambda;
        }
        b
    }

    fn direction(&self, j: &[usize], sigma: &DVector<f64>) -> Option<Direction> {
        let n = self.n();
        let g_jj = submatrix(&self.gram, j, j);
        let g_j = columns(&self.gram, j);
        match self.constraints {
            None => {
                let u = spd_solve(&g_jj, sigma)?;
                let d = &g_j * &u;
                Some(Direction {
                    u,
                    s: DVector::zeros(0),
                    d,
                })
            }
            Some(a) => {
                let a_j = columns(a, j);
                let (u, s) = if j.is_empty() {
                    (DVector::zeros(0), DVector::zeros(a.nrows()))
                } else {
                    bordered_direction(&g_jj, &a_j, sigma)?
                };
                let d = if j.is_empty() {
                    DVector::zeros(n) - a.transpose() * &s
                } else {
                    &g_j * &u - a.transpose() * &s
                };
                Some(Direction { u, s, d })
            }
        }
    }

    fn breakpoint(&self, st: &WalkerState) -> PathBreakpoint {
        PathBreakpoint {
            tau: 2.0 * st.c,
            weights: st.w.clone(),
            multipliers: st.lambda.clone(),
            residual_corr: self.residual_corr(st),
            active_set: support(&st.w),
            events: Vec::new(),
        }
    }

    /// Walks from `st` (a KKT point at `c = st.c`) down to `c_stop`.
    pub fn run(
        &mut self,
        mut st: WalkerState,
        c_stop: f64,
        options: &PathOptions,
        scale: f64,
    ) -> Result<Vec<PathBreakpoint>> {
        let n = self.n();
        let m = self.constraints.map_or(0, |a| a.nrows());
        let scale = scale.max(self.cty.amax()).max(f64::MIN_POSITIVE);
        let zero_tol = ZERO_RTOL * scale;
        let group_tol = GROUP_RTOL * scale;
        let boundary_tol = BOUNDARY_RTOL * scale;
        let budget = options.breakpoint_budget(n, m);
        let max_iter = 4 * budget + 16;

        let mut bps = vec![self.breakpoint(&st)];
        bps[0].events.push(PathEvent::Start);
        if st.c <= c_stop + zero_tol || st.c <= zero_tol {
            bps[0].events.push(PathEvent::Stop);
            return Ok(bps);
        }
        let mut j_above: Vec<usize> = Vec::new();
        let mut first = true;

        for _ in 0..max_iter {
            let cap_hit = options
                .max_active
                .is_some_and(|k| bps.last().unwrap().active_set.len() >= k);
            if cap_hit {
                bps.last_mut().unwrap().events.push(PathEvent::Stop);
                return Ok(bps);
            }

            // Next active set.
            let b = self.residual_corr(&st);
            let supp = support(&st.w);
            let optional: Vec<usize> = (0..n)
                .filter(|&i| st.w[i] == 0.0 && b[i].abs() >= st.c - boundary_tol)
                .collect();
            let sign_of = |i: usize| -> f64 {
                if st.w[i] != 0.0 {
                    st.w[i].signum()
                } else {
                    b[i].signum()
                }
            };
            let outcome = resolve(&supp, &optional, |j| {
                let sigma = DVector::from_iterator(j.len(), j.iter().map(|&i| sign_of(i)));
                let dir = self.direction(j, &sigma)?;
                let umax = dir.u.amax().max(1.0);
                let mut viol: Vec<(usize, Violation)> = Vec::new();
                for &i in &optional {
                    let si = sign_of(i);
                    match j.iter().position(|&x| x == i) {
                        Some(k) => {
                            let rate = si * dir.u[k];
                            if rate < -DIRECTION_TOL * umax {
                                viol.push((i, (-rate, 0.0)));
                            }
                        }
                        None => {
                            let slack = si * dir.d[i] - 1.0;
                            if slack < -DIRECTION_TOL * umax {
                                viol.push((i, (-slack, 0.0)));
                            }
                        }
                    }
                }
                Some((dir, viol))
            });
            let (j, dir) = match outcome {
                TieOutcome::Resolved(j, d) => (j, d),
                TieOutcome::Singular(active) => {
                    return Err(Error::SingularActiveSystem { tau: 2.0 * st.c, active });
                }
                TieOutcome::Degenerate(tied) => {
                    return Err(Error::DegenerateTie { tau: 2.0 * st.c, tied });
                }
            };

            // Record what changed at the last breakpoint.
            let last = bps.last_mut().unwrap();
            if !first && j == j_above && last.events.is_empty() {
                // Same segment continues; the vertex is spurious.
                bps.pop();
            } else {
                for &i in &j_above {
                    if !j.contains(&i) {
                        last.events.push(PathEvent::Leave(i));
                    }
                }
                for &i in &j {
                    if !j_above.contains(&i) {
                        last.events.push(PathEvent::Enter(i));
                    }
                }
            }
            first = false;

            // Step length.
            let mut gamma = st.c - c_stop;
            let mut stop = true;
            let mut candidates: Vec<(f64, Option<usize>)> = Vec::new();
            for i in 0..n {
                if j.contains(&i) {
                    continue;
                }
                for s in [1.0, -1.0] {
                    let den = 1.0 - s * dir.d[i];
                    if den > DIRECTION_TOL {
                        let g = ((st.c - s * b[i]) / den).max(0.0);
                        candidates.push((g, None));
                    }
                }
            }
            for (k, &i) in j.iter().enumerate() {
                if st.w[i] != 0.0 && st.w[i] * dir.u[k] < 0.0 {
                    candidates.push(((-st.w[i] / dir.u[k]).max(0.0), Some(i)));
                }
            }
            let gmin = candidates.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
            if gmin < gamma - group_tol {
                gamma = gmin;
                stop = false;
            }
            let leavers: Vec<usize> = candidates
                .iter()
                .filter(|c| c.0 <= gamma + group_tol)
                .filter_map(|c| c.1)
                .collect();

            // Advance.
            for (k, &i) in j.iter().enumerate() {
                st.w[i] += gamma * dir.u[k];
            }
            for i in leavers {
                st.w[i] = 0.0;
            }
            if m > 0 {
                st.lambda += &dir.s * gamma;
            }
            if gamma <= zero_tol && !stop {
                // Coincident vertex: stay on the last breakpoint and redo its
                // events once the final active set is known.
                let last = bps.last_mut().unwrap();
                let mut bp = self.breakpoint(&st);
                bp.tau = last.tau;
                bp.events = last.events.iter().copied().filter(|e| *e == PathEvent::Start).collect();
                *last = bp;
                continue;
            }
            st.c = if stop { c_stop } else { st.c - gamma };

            j_above = j;
            let mut bp = self.breakpoint(&st);
            if stop {
                bp.events.push(PathEvent::Stop);
                bps.push(bp);
                return Ok(bps);
            }
            bps.push(bp);
            if bps.len() > budget {
                return Err(Error::BreakpointBudget { budget });
            }
        }
        Err(Error::BreakpointBudget { budget })
    }
}
