//! Piecewise-linear solution paths.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// What happened to the active set when the path reached a breakpoint
/// (walking towards smaller tau).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathEvent {
    Start,
    Enter(usize),
    Leave(usize),
    Stop,
}

impl PathEvent {
    pub fn label(&self) -> String {
        match self {
            PathEvent::Start => "START".into(),
            PathEvent::Stop => "STOP".into(),
            PathEvent::Enter(i) => format!("ENTER({i})"),
            PathEvent::Leave(i) => format!("LEAVE({i})"),
        }
    }
}

/// One vertex of the piecewise-linear minimizer path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBreakpoint {
    pub tau: f64,
    pub weights: DVector<f64>,
    /// Lagrange multipliers; empty for unconstrained paths.
    pub multipliers: DVector<f64>,
    /// `R^T (y - R w) + A^T lambda`, divided componentwise by the penalty weights.
    pub residual_corr: DVector<f64>,
    /// Indices with nonzero weight, ascending.
    pub active_set: Vec<usize>,
    pub events: Vec<PathEvent>,
}

impl PathBreakpoint {
    pub fn active_count(&self) -> usize {
        self.active_set.len()
    }

    pub fn l1_norm(&self) -> f64 {
        self.weights.iter().map(|x| x.abs()).sum()
    }
}

/// Breakpoints ordered by strictly decreasing tau. Between neighbours the
/// minimizer (and the multipliers) are affine in tau.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPath {
    pub breakpoints: Vec<PathBreakpoint>,
    pub problem_fingerprint: String,
}

impl SolutionPath {
    pub fn tau_max(&self) -> f64 {
        self.breakpoints.first().map_or(0.0, |b| b.tau)
    }

    /// Smallest tau covered by the path.
    pub fn tau_min(&self) -> f64 {
        self.breakpoints.last().map_or(0.0, |b| b.tau)
    }

    pub fn start(&self) -> &PathBreakpoint {
        &self.breakpoints[0]
    }

    pub fn n_assets(&self) -> usize {
        self.breakpoints.first().map_or(0, |b| b.weights.len())
    }

    /// Index `k` of the segment `[tau_{k+1}, tau_k]` containing `tau`, or
    /// `None` when `tau` is at or above the first breakpoint.
    fn segment(&self, tau: f64) -> Result<Option<usize>> {
        if tau.is_nan() {
            return Err(Error::InvalidProblem("tau is NaN".into()));
        }
        let tau_min = self.tau_min();
        if tau < tau_min {
            return Err(Error::TauBelowStop { tau, tau_stop: tau_min });
        }
        if tau >= self.tau_max() {
            return Ok(None);
        }
        let k = self.breakpoints.partition_point(|b| b.tau > tau);
        Ok(Some(k - 1))
    }

    fn interpolate(&self, tau: f64, pick: impl Fn(&PathBreakpoint) -> &DVector<f64>) -> Result<DVector<f64>> {
        let Some(k) = self.segment(tau)? else {
            return Ok(pick(self.start()).clone());
        };
        let (hi, lo) = (&self.breakpoints[k], &self.breakpoints[k + 1]);
        if tau == lo.tau {
            return Ok(pick(lo).clone());
        }
        let t = (hi.tau - tau) / (hi.tau - lo.tau);
        let (a, b) = (pick(hi), pick(lo));
        let mut out = a * (1.0 - t) + b * t;
        // Keep exact zeros where both ends vanish.
        for i in 0..out.len() {
            if a[i] == 0.0 && b[i] == 0.0 {
                out[i] = 0.0;
            }
        }
        Ok(out)
    }

    /// Minimizer at `tau` by affine interpolation; above the first breakpoint
    /// the start weights are returned.
    pub fn eval_at(&self, tau: f64) -> Result<DVector<f64>> {
        self.interpolate(tau, |b| &b.weights)
    }

    /// Multipliers at `tau`, interpolated like the weights.
    pub fn multipliers_at(&self, tau: f64) -> Result<DVector<f64>> {
        self.interpolate(tau, |b| &b.multipliers)
    }
}

/// Nonzero pattern of `w`, ascending.
pub(crate) fn support(w: &DVector<f64>) -> Vec<usize> {
    (0..w.len()).filter(|&i| w[i] != 0.0).collect()
}
