//! Browser demo: generate a random problem, walk its exact l1 path and
//! inspect the minimizer at any penalty level.
//!
//! The wasm bindings are thin wrappers around [`Explorer`], which also
//! builds natively so the logic is testable with `cargo test`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;
use sparsefolio::portfolio::{build_tracking_problem, MarkowitzSpec, PortfolioPath};
use sparsefolio::{solve_path, PenalizedProblem, ReturnPanel, SolutionPath, YearMonth};
use wasm_bindgen::prelude::*;

const MAX_ASSETS: usize = 40;
const MAX_PERIODS: usize = 240;

/// Monthly one-factor returns, annualized decimals.
fn random_panel(rng: &mut ChaCha8Rng, n: usize, t: usize) -> Result<ReturnPanel, String> {
    let betas: Vec<f64> = (0..n).map(|_| rng.random_range(0.6..1.4)).collect();
    let alphas: Vec<f64> = (0..n).map(|_| rng.random_range(-0.02..0.06)).collect();
    let mut r = nalgebra::DMatrix::zeros(t, n);
    for k in 0..t {
        let f: f64 = StandardNormal.sample(rng);
        for j in 0..n {
            let e: f64 = StandardNormal.sample(rng);
            r[(k, j)] = 0.08 + alphas[j] + betas[j] * 0.5 * f + 0.3 * e;
        }
    }
    let start = YearMonth { year: 2000, month: 1 };
    let dates = (0..t).map(|k| start.add_months(k as i64)).collect();
    let names = (0..n).map(|j| format!("A{}", j + 1)).collect();
    ReturnPanel::new(r, dates, names).map_err(|e| e.to_string())
}

/// A solved path and the problem it belongs to.
pub struct Explorer {
    problem: PenalizedProblem,
    path: SolutionPath,
    constrained: bool,
}

impl Explorer {
    /// `constrained` builds a fully invested Markowitz problem at the 1/N
    /// target return; otherwise a tracking problem for a noisy equal-weight
    /// index.
    pub fn generate(seed: u64, n: usize, t: usize, constrained: bool) -> Result<Self, String> {
        if !(1..=MAX_ASSETS).contains(&n) {
            return Err(format!("assets must be between 1 and {MAX_ASSETS}"));
        }
        if !(2..=MAX_PERIODS).contains(&t) {
            return Err(format!("periods must be between 2 and {MAX_PERIODS}"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let panel = random_panel(&mut rng, n, t)?;
        if constrained {
            let spec = MarkowitzSpec::equal_weight_target(panel);
            let solved = PortfolioPath::from_markowitz(&spec).map_err(|e| format!("{}: {e}", e.name()))?;
            Ok(Self {
                problem: solved.problem,
                path: solved.path,
                constrained: true,
            })
        } else {
            let index = DVector::from_fn(t, |k, _| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                panel.row(k).mean() + 0.02 * noise
            });
            let spreads = DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0));
            let problem = build_tracking_problem(&index, &panel, &spreads).map_err(|e| e.to_string())?;
            let path = solve_path(&problem).map_err(|e| format!("{}: {e}", e.name()))?;
            Ok(Self {
                problem,
                path,
                constrained: false,
            })
        }
    }

    pub fn path(&self) -> &SolutionPath {
        &self.path
    }

    pub fn weights_at(&self, tau: f64) -> Result<Vec<f64>, String> {
        if !tau.is_finite() {
            return Err("tau must be finite".into());
        }
        let tau = tau.clamp(self.path.tau_min(), self.path.tau_max());
        self.path
            .eval_at(tau)
            .map(|w| w.as_slice().to_vec())
            .map_err(|e| e.to_string())
    }

    /// Residual, weighted l1 cost and active count at `tau`.
    pub fn summary_at(&self, tau: f64) -> Result<String, String> {
        let w = DVector::from_vec(self.weights_at(tau)?);
        let active = w.iter().filter(|&&x| x != 0.0).count();
        Ok(json!({
            "tau": tau,
            "residual_sq": self.problem.residual_sq(&w),
            "weighted_l1": self.problem.penalty(&w),
            "active_count": active,
            "weight_sum": w.sum(),
        })
        .to_string())
    }

    /// Vertices as `[{tau, weights, events}]`.
    pub fn breakpoints_json(&self) -> String {
        let bps: Vec<_> = self
            .path
            .breakpoints
            .iter()
            .map(|b| {
                json!({
                    "tau": b.tau,
                    "weights": b.weights.as_slice(),
                    "events": b.events.iter().map(|e| e.label()).collect::<Vec<_>>(),
                })
            })
            .collect();
        json!({ "constrained": self.constrained, "breakpoints": bps }).to_string()
    }
}

#[wasm_bindgen]
pub struct PathExplorer {
    inner: Explorer,
}

#[wasm_bindgen]
impl PathExplorer {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, n: usize, t: usize, constrained: bool) -> Result<PathExplorer, JsValue> {
        Explorer::generate(u64::from(seed), n, t, constrained)
            .map(|inner| PathExplorer { inner })
            .map_err(|e| JsValue::from_str(&e))
    }

    pub fn breakpoints_json(&self) -> String {
        self.inner.breakpoints_json()
    }

    pub fn weights_at(&self, tau: f64) -> Result<Vec<f64>, JsValue> {
        self.inner.weights_at(tau).map_err(|e| JsValue::from_str(&e))
    }

    pub fn summary_at(&self, tau: f64) -> Result<String, JsValue> {
        self.inner.summary_at(tau).map_err(|e| JsValue::from_str(&e))
    }

    pub fn tau_max(&self) -> f64 {
        self.inner.path.tau_max()
    }

    pub fn tau_min(&self) -> f64 {
        self.inner.path.tau_min()
    }

    pub fn n_assets(&self) -> usize {
        self.inner.path.n_assets()
    }

    pub fn n_breakpoints(&self) -> usize {
        self.inner.path.breakpoints.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constrained_weights_stay_fully_invested() {
        let ex = Explorer::generate(7, 10, 60, true).unwrap();
        let (lo, hi) = (ex.path().tau_min(), ex.path().tau_max());
        for k in 0..=20 {
            let tau = lo + (hi - lo) * f64::from(k) / 20.0;
            let w = ex.weights_at(tau).unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        let start = ex.weights_at(hi * 10.0).unwrap();
        assert!(start.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn tracking_path_starts_empty() {
        let ex = Explorer::generate(3, 8, 40, false).unwrap();
        let w = ex.weights_at(ex.path().tau_max()).unwrap();
        assert!(w.iter().all(|&x| x == 0.0));
        let v: serde_json::Value = serde_json::from_str(&ex.summary_at(0.0).unwrap()).unwrap();
        assert_eq!(v["active_count"], 8);
    }

    #[test]
    fn breakpoints_serialize() {
        let ex = Explorer::generate(1, 5, 30, true).unwrap();
        let v: serde_json::Value = serde_json::from_str(&ex.breakpoints_json()).unwrap();
        let bps = v["breakpoints"].as_array().unwrap();
        assert_eq!(bps.len(), ex.path().breakpoints.len());
        assert_eq!(bps[0]["events"][0], "START");
        assert_eq!(v["constrained"], true);
    }

    #[test]
    fn same_seed_same_path() {
        let a = Explorer::generate(11, 6, 24, false).unwrap();
        let b = Explorer::generate(11, 6, 24, false).unwrap();
        assert_eq!(a.breakpoints_json(), b.breakpoints_json());
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(Explorer::generate(0, 0, 10, true).is_err());
        assert!(Explorer::generate(0, 5, 1, true).is_err());
        assert!(Explorer::generate(0, MAX_ASSETS + 1, 10, false).is_err());
        let ex = Explorer::generate(0, 3, 10, false).unwrap();
        assert!(ex.weights_at(f64::NAN).is_err());
    }
}
