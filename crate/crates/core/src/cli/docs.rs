//! JSON input documents and the backtest config file.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use super::CliError;

/// Row-major matrix as nested arrays.
pub type Rows = Vec<Vec<f64>>;

pub fn matrix(rows: &Rows, what: &str) -> Result<DMatrix<f64>, CliError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(k) = rows.iter().position(|r| r.len() != ncols) {
        return Err(CliError::input(format!("{what}: row {k} has {} entries, expected {ncols}", rows[k].len())));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintsDoc {
    pub matrix: Rows,
    pub rhs: Vec<f64>,
}

/// `{design, target, penalty_weights?, constraints?, tau_stop?}`
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDoc {
    pub design: Rows,
    pub target: Vec<f64>,
    pub penalty_weights: Option<Vec<f64>>,
    pub constraints: Option<ConstraintsDoc>,
    pub tau_stop: Option<f64>,
}

/// `{index_returns, returns?, spreads?}`; `returns` may come from `--panel`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackDoc {
    pub index_returns: Vec<f64>,
    pub returns: Option<Rows>,
    pub spreads: Option<Vec<f64>>,
}

/// `{pnl_existing, pnl_unit, probabilities?, spreads?}`
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HedgeDoc {
    pub pnl_existing: Vec<f64>,
    pub pnl_unit: Rows,
    pub probabilities: Option<Vec<f64>>,
    pub spreads: Option<Vec<f64>>,
}

/// `{current, returns?, target_return?, penalty_weights?}`
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjustDoc {
    pub current: Vec<f64>,
    pub returns: Option<Rows>,
    pub target_return: Option<f64>,
    pub penalty_weights: Option<Vec<f64>>,
}

/// Backtest settings; command-line flags override these.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestFile {
    pub data: Option<PathBuf>,
    pub policy: Option<String>,
    pub k: Option<usize>,
    pub bin: Option<[usize; 2]>,
    pub start: Option<String>,
    pub end: Option<String>,
    pub training_months: Option<usize>,
    pub sharpe_k: Option<[usize; 2]>,
    pub periods: Option<Vec<[String; 2]>>,
    pub expected_assets: Option<usize>,
    pub out: Option<PathBuf>,
    pub paper_mode: Option<bool>,
}
