//! Solution paths under affine equality constraints.
//!
//! The start of the path (the minimizer for all large tau) comes from a
//! homotopy on the penalized problem `(1/eps) |A w - a|^2 + |R w - y|^2 +
//! tau |w|_1` carried out in formal first-order arithmetic in `eps`. Once the
//! zeroth-order part of the penalty level reaches zero the weights are
//! feasible. The sign pattern found this way is then checked against the
//! exact optimality conditions, and the walk continues with Lagrange
//! multipliers.

use nalgebra::{DMatrix, DVector};

use crate::dual::{Dual, DualTol};
use crate::error::{Error, Result};
use crate::homotopy::{finish, PathOptions, Walker, WalkerState, GROUP_RTOL};
use crate::linalg::{columns, first_order_direction, submatrix};
use crate::path::{support, PathBreakpoint, PathEvent, SolutionPath};
use crate::problem::{AffineConstraints, PenalizedProblem};
use crate::ties::{resolve, TieOutcome, Violation};

/// Relative threshold below which a zeroth-order rate counts as zero.
const RATE_TOL: f64 = 1e-9;
/// Relative threshold on zeroth-order gaps.
const GAP_RTOL: f64 = 1e-9;
/// Relative threshold on first-order gaps, against their current magnitude.
const GROWTH_RTOL: f64 = 1e-12;
/// Slack in the sign checks on trial directions.
const DIRECTION_TOL: f64 = 1e-10;
/// Slack on the limiting correlation rates when certifying a start.
const LIMIT_TOL: f64 = 1e-9;

/// One vertex of the first-order phase, with the segment leaving it.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderState {
    pub w0: DVector<f64>,
    pub w1: DVector<f64>,
    pub tau0: f64,
    pub tau1: f64,
    pub direction0: DVector<f64>,
    pub direction1: DVector<f64>,
    pub step0: f64,
    pub step1: f64,
    pub active_set: Vec<usize>,
}

/// Result of the first-order phase.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedStart {
    /// The path's first breakpoint (weights, multipliers, residual).
    pub breakpoint: PathBreakpoint,
    /// The start weights minimize the problem for every tau at or above this.
    pub tau_start: f64,
    /// Vertices of the first-order phase in walking order.
    pub trace: Vec<FirstOrderState>,
}

/// Problem data in rescaled coordinates.
struct Scaled {
    gram: DMatrix<f64>,
    cty: DVector<f64>,
    a: DMatrix<f64>,
    hess: DMatrix<f64>,
    h: DVector<f64>,
    rhs: DVector<f64>,
}

impl Scaled {
    fn new(problem: &PenalizedProblem, constraints: &AffineConstraints) -> Result<Self> {
        let n = problem.n_assets();
        if constraints.n_vars() != n && !constraints.is_empty() {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: constraints.n_vars(),
            });
        }
        let d = problem.rescaled_design();
        let mut a = if constraints.is_empty() {
            DMatrix::zeros(0, n)
        } else {
            constraints.matrix().clone()
        };
        for (i, mut col) in a.column_iter_mut().enumerate() {
            col /= problem.penalty_weights()[i];
        }
        let gram = d.transpose() * &d;
        let cty = d.transpose() * problem.target();
        let hess = a.transpose() * &a;
        let h = a.transpose() * constraints.rhs();
        Ok(Self {
            gram,
            cty,
            a,
            hess,
            h,
            rhs: constraints.rhs().clone(),
        })
    }

    /// Stationarity and feasibility on support `j` with signs `sigma`, as
    /// the matrix and the right-hand sides of its constant and
    /// per-unit-penalty parts.
    fn kkt_system(&self, j: &[usize], sigma: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let (k, m) = (j.len(), self.a.nrows());
        let a_j = columns(&self.a, j);
        let mut kkt = DMatrix::zeros(k + m, k + m);
        kkt.view_mut((0, 0), (k, k)).copy_from(&submatrix(&self.gram, j, j));
        kkt.view_mut((0, k), (k, m)).copy_from(&(-a_j.transpose()));
        kkt.view_mut((k, 0), (m, k)).copy_from(&a_j);
        let mut fixed = DVector::zeros(k + m);
        for (r, &i) in j.iter().enumerate() {
            fixed[r] = self.cty[i];
        }
        fixed.rows_mut(k, m).copy_from(&self.rhs);
        let mut unit = DVector::zeros(k + m);
        unit.rows_mut(0, k).copy_from(&(-sigma));
        (kkt, fixed, unit)
    }

    /// Exact start from the sign pattern of `w`. Above the start the
    /// weights are constant and the multipliers affine in the penalty level
    /// `c`, so optimality for every `c` above a threshold can be checked
    /// directly. Signs that flip are dropped and correlations that escape
    /// are added until the check passes. Returns weights, multipliers and
    /// the threshold, or `None` if the pattern cannot be certified.
    fn certify(&self, w: &DVector<f64>, c_hint: f64, c_stop: f64) -> Option<(DVector<f64>, DVector<f64>, f64)> {
        let n = w.len();
        let m = self.a.nrows();
        let mut j = support(w);
        let mut sign: Vec<f64> = j.iter().map(|&i| w[i].signum()).collect();
        let gap_tol = GAP_RTOL * self.cty.amax().max(c_hint).max(f64::MIN_POSITIVE);
        for _ in 0..2 * n + 4 {
            let k = j.len();
            if k == 0 {
                return None;
            }
            let sigma = DVector::from_column_slice(&sign);
            let (kkt, fixed, unit) = self.kkt_system(&j, &sigma);
            let lu = kkt.clone().lu();
            let xa = lu.solve(&fixed)?;
            let xb = lu.solve(&unit)?;
            let res = (&kkt * &xa - &fixed).amax().max((&kkt * &xb - &unit).amax());
            if !res.is_finite() || res > gap_tol {
                return None;
            }
            // Constant weights need the signs in the row space of the
            // active constraint columns.
            if xb.rows(0, k).amax() > LIMIT_TOL * (1.0 + xa.rows(0, k).amax()) {
                return None;
            }
            let wj = xa.rows(0, k);
            if let Some(r) = (0..k)
                .filter(|&r| wj[r] * sign[r] <= 0.0)
                .min_by(|&p, &q| (wj[p] * sign[p]).total_cmp(&(wj[q] * sign[q])))
            {
                j.remove(r);
                sign.remove(r);
                continue;
            }
            let mu = xa.rows(k, m).into_owned();
            let pi = xb.rows(k, m).into_owned();
            let mut full = DVector::zeros(n);
            for (r, &i) in j.iter().enumerate() {
                full[i] = wj[r];
            }
            // Keep the incoming weights when they agree to round-off.
            if (&full - w).amax() <= 1e-13 * (1.0 + w.amax()) {
                full.copy_from(w);
            }
            let alpha = &self.cty - &self.gram * &full + self.a.transpose() * &mu;
            let beta = self.a.transpose() * &pi;
            // Worst escape as (priority, size, index, sign).
            let mut escape: Option<(u8, f64, usize, f64)> = None;
            let mut c_root = f64::NEG_INFINITY;
            for i in (0..n).filter(|i| !j.contains(i)) {
                let s = if beta[i].abs() > LIMIT_TOL { beta[i].signum() } else { alpha[i].signum() };
                let cand = if beta[i].abs() > 1.0 + LIMIT_TOL {
                    Some((1, beta[i].abs(), i, s))
                } else if beta[i].abs() >= 1.0 - LIMIT_TOL && s * alpha[i] > gap_tol {
                    Some((0, s * alpha[i], i, s))
                } else {
                    None
                };
                if let Some(e) = cand {
                    if escape.is_none_or(|f| (e.0, e.1) > (f.0, f.1)) {
                        escape = Some(e);
                    }
                    continue;
                }
                for s in [1.0, -1.0] {
                    let d = 1.0 - s * beta[i];
                    if d > LIMIT_TOL {
                        c_root = c_root.max(s * alpha[i] / d);
                    }
                }
            }
            if let Some((_, _, i, s)) = escape {
                let at = j.partition_point(|&x| x < i);
                j.insert(at, i);
                sign.insert(at, s);
                continue;
            }
            let c = if c_root.is_finite() { c_root } else { c_hint }.max(c_stop);
            return Some((full, &mu + &pi * c, c));
        }
        None
    }

    /// Re-solves the stationarity and feasibility equations on the support of
    /// `w` at penalty level `c`. The accumulated first-order arithmetic can
    /// leave residuals well above round-off; the solve is kept only if it
    /// lowers them without flipping a sign.
    fn refine(&self, w: DVector<f64>, lambda: DVector<f64>, c: f64) -> (DVector<f64>, DVector<f64>) {
        let j = support(&w);
        let (k, m) = (j.len(), self.a.nrows());
        let sigma = DVector::from_iterator(k, j.iter().map(|&i| w[i].signum()));
        let g_jj = submatrix(&self.gram, &j, &j);
        let a_j = columns(&self.a, &j);
        let mut kkt = DMatrix::zeros(k + m, k + m);
        kkt.view_mut((0, 0), (k, k)).copy_from(&g_jj);
        kkt.view_mut((0, k), (k, m)).copy_from(&(-a_j.transpose()));
        kkt.view_mut((k, 0), (m, k)).copy_from(&a_j);
        let mut rhs = DVector::zeros(k + m);
        for (r, &i) in j.iter().enumerate() {
            rhs[r] = self.cty[i] - sigma[r] * c;
        }
        rhs.rows_mut(k, m).copy_from(&self.rhs);
        let residual = |x: &DVector<f64>| (&kkt * x - &rhs).amax();
        let mut x = DVector::zeros(k + m);
        for (r, &i) in j.iter().enumerate() {
            x[r] = w[i];
        }
        x.rows_mut(k, m).copy_from(&lambda);
        let Some(y) = kkt.clone().lu().solve(&rhs) else {
            return (w, lambda);
        };
        let keeps_signs = (0..k).all(|r| y[r] * sigma[r] > 0.0);
        if !y.iter().all(|v| v.is_finite()) || !keeps_signs || residual(&y) >= residual(&x) {
            return (w, lambda);
        }
        let mut out = w;
        for (r, &i) in j.iter().enumerate() {
            out[i] = y[r];
        }
        (out, y.rows(k, m).into_owned())
    }

    /// Residual correlation of the eps-problem, both orders.
    fn corr(&self, w0: &DVector<f64>, w1: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let b0 = &self.h - &self.hess * w0;
        let b1 = &self.cty - &self.gram * w0 - &self.hess * w1;
        (b0, b1)
    }
}

fn dual_at(x0: &DVector<f64>, x1: &DVector<f64>, i: usize) -> Dual {
    Dual::new(x0[i], x1[i])
}

enum Candidate {
    /// Fires at a definite step `(g0, g1)`; `spread` is the round-off in
    /// `g0` when the gap closes slowly.
    Regular { g0: f64, g1: f64, spread: f64, event: Event },
    /// Fires at zeroth-order step `g0`; the first-order step is not decided
    /// at this order.
    Degenerate { g0: f64, event: Event },
}

#[derive(Clone, Copy)]
enum Event {
    Enter(usize),
    Leave(usize),
}

impl Candidate {
    fn g0(&self) -> f64 {
        match self {
            Candidate::Regular { g0, .. } | Candidate::Degenerate { g0, .. } => *g0,
        }
    }
    fn event(&self) -> Event {
        match self {
            Candidate::Regular { event, .. } | Candidate::Degenerate { event, .. } => *event,
        }
    }
}

/// Start of the constrained path: the minimizer valid for all large tau.
pub fn find_constrained_start(
    problem: &PenalizedProblem,
    constraints: &AffineConstraints,
) -> Result<(PathBreakpoint, f64)> {
    let start = find_constrained_start_with(problem, constraints, &PathOptions::default())?;
    let mut bp = start.breakpoint;
    if !problem.has_unit_weights() {
        bp.weights.component_div_assign(problem.penalty_weights());
    }
    Ok((bp, start.tau_start))
}

/// First-order phase in rescaled coordinates; the returned breakpoint's
/// weights are those of the column-rescaled problem.
pub fn find_constrained_start_with(
    problem: &PenalizedProblem,
    constraints: &AffineConstraints,
    options: &PathOptions,
) -> Result<ConstrainedStart> {
    let sc = Scaled::new(problem, constraints)?;
    let n = problem.n_assets();
    let m = constraints.n_rows();
    let budget = options.epsilon_budget.unwrap_or(4 * n + 4 * m);
    let tau_stop = problem.tau_stop();

    let scale0 = sc.h.amax();
    let scale1 = sc.cty.amax().max(f64::MIN_POSITIVE);
    let mut w0 = DVector::zeros(n);
    let mut w1 = DVector::zeros(n);
    let mut trace = Vec::new();

    let make_start = |w: DVector<f64>, lambda: DVector<f64>, c1: f64, trace: Vec<FirstOrderState>| {
        let mut b = &sc.cty - &sc.gram * &w;
        if m > 0 {
            b += sc.a.transpose() * &lambda;
        }
        let bp = PathBreakpoint {
            tau: 2.0 * c1,
            active_set: support(&w),
            weights: w,
            multipliers: lambda,
            residual_corr: b,
            events: vec![PathEvent::Start],
        };
        ConstrainedStart {
            tau_start: 2.0 * c1,
            breakpoint: bp,
            trace,
        }
    };

    if m == 0 {
        // Zero is feasible and the unique l1-minimal point.
        let c1 = sc.cty.amax().max(tau_stop / 2.0);
        return Ok(make_start(w0, DVector::zeros(0), c1, trace));
    }

    let tol_base = DualTol {
        zeroth: GAP_RTOL * scale0,
        first: GAP_RTOL * scale1,
    };
    let group0 = GROUP_RTOL * scale0;

    // Initial penalty level: lexicographic max of |b|.
    let (b0, b1) = sc.corr(&w0, &w1);
    let mut c = Dual::ZERO;
    for i in 0..n {
        let bi = dual_at(&b0, &b1, i).abs(tol_base);
        if bi.cmp_lex(c, tol_base).is_gt() {
            c = bi;
        }
    }

    // Indices that reached the boundary on the previous step; they are tied
    // by construction whatever round-off says about their gap.
    let mut hit: Vec<usize> = Vec::new();
    for _ in 0..budget {
        let (b0, b1) = sc.corr(&w0, &w1);
        // First-order parts can grow far beyond their initial size.
        let tol0 = DualTol {
            first: (GAP_RTOL * scale1).max(GROWTH_RTOL * b1.amax().max(c.x1.abs())),
            ..tol_base
        };
        let bd = |i: usize| dual_at(&b0, &b1, i);
        let wd = |i: usize| dual_at(&w0, &w1, i);
        let supp: Vec<usize> = (0..n).filter(|&i| w0[i] != 0.0 || w1[i] != 0.0).collect();
        let optional: Vec<usize> = (0..n)
            .filter(|&i| w0[i] == 0.0 && w1[i] == 0.0)
            .filter(|&i| hit.contains(&i) || (c - bd(i).abs(tol0)).signum(tol0) <= 0)
            .collect();
        let sign_of = |i: usize| -> f64 {
            let s = if w0[i] != 0.0 {
                w0[i].signum()
            } else if w1[i] != 0.0 {
                w1[i].signum()
            } else {
                f64::from(bd(i).signum(tol0))
            };
            if s < 0.0 {
                -1.0
            } else {
                1.0
            }
        };

        let outcome = resolve(&supp, &optional, |j| {
            let sigma = DVector::from_iterator(j.len(), j.iter().map(|&i| sign_of(i)));
            let g_jj = submatrix(&sc.gram, j, j);
            let a_j = columns(&sc.a, j);
            let (u0j, u1j) = first_order_direction(&g_jj, &a_j, &sigma)?;
            let mut u0 = DVector::zeros(n);
            let mut u1 = DVector::zeros(n);
            for (k, &i) in j.iter().enumerate() {
                u0[i] = u0j[k];
                u1[i] = u1j[k];
            }
            let v0 = &sc.hess * &u0;
            let v1 = &sc.hess * &u1 + &sc.gram * &u0;
            let utol = DualTol {
                zeroth: DIRECTION_TOL * u0.amax().max(1.0),
                first: DIRECTION_TOL * u1.amax().max(1.0),
            };
            let vtol = DualTol {
                zeroth: DIRECTION_TOL,
                first: DIRECTION_TOL * v1.amax().max(1.0),
            };
            let mut viol: Vec<(usize, Violation)> = Vec::new();
            for &i in &optional {
                let si = sign_of(i);
                if j.contains(&i) {
                    let rate = dual_at(&u0, &u1, i).scale(si);
                    if rate.signum(utol) < 0 {
                        viol.push((i, (-rate.x0, -rate.x1)));
                    }
                } else {
                    let slack = dual_at(&v0, &v1, i).scale(si) - Dual::ONE;
                    if slack.signum(vtol) < 0 {
                        viol.push((i, (-slack.x0, -slack.x1)));
                    }
                }
            }
            Some(((u0, u1, v0, v1), viol))
        });
        let (j, (u0, u1, v0, v1)) = match outcome {
            TieOutcome::Resolved(j, d) => (j, d),
            TieOutcome::Singular(active) => {
                return Err(Error::SingularActiveSystem { tau: f64::INFINITY, active });
            }
            TieOutcome::Degenerate(tied) => {
                return Err(Error::DegenerateTie { tau: f64::INFINITY, tied });
            }
        };

        // Candidate events along the segment.
        let umax0 = u0.amax().max(f64::MIN_POSITIVE);
        let mut cands: Vec<Candidate> = Vec::new();
        for i in 0..n {
            if j.contains(&i) {
                continue;
            }
            for s in [1.0, -1.0] {
                let num = c - bd(i).scale(s);
                let den = Dual::ONE - dual_at(&v0, &v1, i).scale(s);
                if den.x0 > RATE_TOL {
                    let g = clamp_step(num.checked_div(den, 0.0).expect("nonzero divisor"));
                    cands.push(Candidate::Regular {
                        g0: g.x0,
                        g1: g.x1,
                        spread: group0 / den.x0.min(1.0),
                        event: Event::Enter(i),
                    });
                } else if den.x0.abs() <= RATE_TOL && num.x0 <= tol0.zeroth && den.x1 > tol0.first {
                    cands.push(Candidate::Degenerate {
                        g0: (num.x1 / den.x1).max(0.0),
                        event: Event::Enter(i),
                    });
                }
            }
        }
        for &i in &j {
            let wi = wd(i);
            if wi.is_zero(tol0) && w0[i] == 0.0 && w1[i] == 0.0 {
                continue;
            }
            let si = sign_of(i);
            let ui = dual_at(&u0, &u1, i);
            if ui.x0.abs() > RATE_TOL * umax0 {
                if si * ui.x0 < 0.0 {
                    let g = clamp_step((-wi).checked_div(ui, 0.0).expect("nonzero divisor"));
                    cands.push(Candidate::Regular {
                        g0: g.x0,
                        g1: g.x1,
                        spread: group0,
                        event: Event::Leave(i),
                    });
                }
            } else if w0[i].abs() <= tol0.zeroth * umax0.max(1.0) && si * ui.x1 < 0.0 {
                cands.push(Candidate::Degenerate {
                    g0: (-w1[i] / ui.x1).max(0.0),
                    event: Event::Leave(i),
                });
            }
        }

        let mut g0 = c.x0;
        let mut terminal = true;
        let gmin = cands.iter().map(Candidate::g0).fold(f64::INFINITY, f64::min);
        if gmin < c.x0 - group0 {
            g0 = gmin;
            terminal = false;
        }
        let at_g0: Vec<&Candidate> = cands
            .iter()
            .filter(|cd| match cd {
                Candidate::Regular { spread, .. } => cd.g0() <= g0 + spread,
                Candidate::Degenerate { .. } => cd.g0() <= g0 + group0,
            })
            .collect();
        let g1 = at_g0
            .iter()
            .filter_map(|cd| match cd {
                Candidate::Regular { g1, .. } => Some(*g1),
                _ => None,
            })
            .fold(f64::INFINITY, f64::min);
        let has_regular = g1.is_finite();
        let g1 = if has_regular { g1 } else { 0.0 };
        let g1_tol = GROUP_RTOL * scale1.max(g1.abs());
        let fired: Vec<Event> = at_g0
            .iter()
            .filter(|cd| match cd {
                Candidate::Regular { g1: x, .. } => *x <= g1 + g1_tol,
                Candidate::Degenerate { .. } => true,
            })
            .map(|cd| cd.event())
            .collect();
        trace.push(FirstOrderState {
            w0: w0.clone(),
            w1: w1.clone(),
            tau0: 2.0 * c.x0,
            tau1: 2.0 * c.x1,
            direction0: u0.clone(),
            direction1: u1.clone(),
            step0: g0,
            step1: g1,
            active_set: j.clone(),
        });

        // Advance.
        for &i in &j {
            w1[i] += g0 * u1[i] + g1 * u0[i];
            w0[i] += g0 * u0[i];
        }
        hit.clear();
        for e in fired {
            match e {
                Event::Leave(i) => {
                    w0[i] = 0.0;
                    w1[i] = 0.0;
                }
                Event::Enter(i) => hit.push(i),
            }
        }
        c = c - Dual::new(g0, g1);

        if terminal {
            // Tidy round-off on weights that vanished at zeroth order.
            let wtol = 1e-13 * w0.amax().max(1.0);
            for i in 0..n {
                if w0[i].abs() <= wtol {
                    w0[i] = 0.0;
                }
            }
            let tau1 = 2.0 * c.x1;
            let tau_start = tau1.max(tau_stop);
            // Slide along the segment of constant weights to the chosen tau.
            let delta = (tau1 - tau_start) / 2.0;
            let w1s = &w1 + &u0 * delta;
            if let Some((w, lambda, c)) = sc.certify(&w0, tau_start / 2.0, tau_stop / 2.0) {
                return Ok(make_start(w, lambda, c, trace));
            }
            let (w, lambda) = sc.refine(w0, -(&sc.a * w1s), tau_start / 2.0);
            return Ok(make_start(w, lambda, tau_start / 2.0, trace));
        }
    }
    Err(Error::EpsilonPhaseStall { budget })
}

/// A step that is negative in the lexicographic order means the event has
/// already happened up to round-off.
fn clamp_step(g: Dual) -> Dual {
    if g.x0 < 0.0 || (g.x0 == 0.0 && g.x1 < 0.0) {
        Dual::new(0.0, g.x1.max(0.0))
    } else {
        g
    }
}

/// Full constrained path from its start down to `tau_stop`.
pub fn solve_constrained_path(problem: &PenalizedProblem, constraints: &AffineConstraints) -> Result<SolutionPath> {
    solve_constrained_path_with(problem, constraints, &PathOptions::default())
}

pub fn solve_constrained_path_with(
    problem: &PenalizedProblem,
    constraints: &AffineConstraints,
    options: &PathOptions,
) -> Result<SolutionPath> {
    let start = find_constrained_start_with(problem, constraints, options)?;
    let sc = Scaled::new(problem, constraints)?;
    let design = problem.rescaled_design();
    let mut walker = Walker::new(&design, problem.target(), Some(&sc.a));
    let st = WalkerState {
        w: start.breakpoint.weights.clone(),
        lambda: start.breakpoint.multipliers.clone(),
        c: start.tau_start / 2.0,
    };
    let scale = sc.cty.amax().max(start.tau_start / 2.0);
    let mut bps = walker.run(st, problem.tau_stop() / 2.0, options, scale)?;
    merge_idle_start(&mut bps);
    let c = if constraints.is_empty() { None } else { Some(constraints) };
    Ok(finish(problem, c, bps))
}

/// With a zero right-hand side the walk may begin above the true start and
/// only move the multipliers while the weights stay at zero. Those vertices
/// are folded into one start at the lowest such tau.
fn merge_idle_start(bps: &mut Vec<PathBreakpoint>) {
    let idle = |b: &PathBreakpoint| b.weights.iter().all(|&w| w == 0.0);
    let k = bps.iter().take_while(|b| idle(b)).count();
    if k < 2 || k == bps.len() {
        return;
    }
    let mut events = vec![PathEvent::Start];
    for b in &bps[..k] {
        for e in &b.events {
            if matches!(e, PathEvent::Enter(_)) && !events.contains(e) {
                events.push(*e);
            }
        }
    }
    bps.drain(..k - 1);
    bps[0].events = events;
}
