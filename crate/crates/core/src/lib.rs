//! Exact solution paths for l1-penalized least squares, with or without
//! affine equality constraints, and sparse mean-variance portfolios built
//! from them.

pub mod backtest;
#[cfg(feature = "cli")]
pub mod cli;
pub mod constrained;
pub mod dual;
pub mod error;
pub mod homotopy;
mod linalg;
pub mod market_data;
#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
pub mod path;
pub mod portfolio;
pub mod problem;
mod ties;

pub use constrained::{
    find_constrained_start, find_constrained_start_with, solve_constrained_path, solve_constrained_path_with,
    ConstrainedStart, FirstOrderState,
};
pub use error::{Error, Result};
pub use homotopy::{initial_tau, solve_path, solve_path_with, PathOptions};
pub use market_data::{ReturnPanel, YearMonth};
pub use path::{PathBreakpoint, PathEvent, SolutionPath};
pub use problem::{fingerprint, AffineConstraints, PenalizedProblem};
