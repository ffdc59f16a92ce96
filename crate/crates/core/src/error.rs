use thiserror::Error;

/// Errors raised by the solvers, builders, data ingestion and backtest.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("constraints are infeasible (least-squares residual {residual:.3e})")]
    InfeasibleConstraints { residual: f64 },

    #[error("constraint rows are linearly dependent or ill-conditioned (condition number {condition:.3e})")]
    DependentConstraints { condition: f64 },

    #[error("active system is numerically singular at tau = {tau:.6e} (active set {active:?})")]
    SingularActiveSystem { tau: f64, active: Vec<usize> },

    #[error("no consistent walking direction for tied indices {tied:?} at tau = {tau:.6e}")]
    DegenerateTie { tau: f64, tied: Vec<usize> },

    #[error("first-order phase used {budget} breakpoints without reaching the feasible set")]
    EpsilonPhaseStall { budget: usize },

    #[error("path exceeded {budget} breakpoints")]
    BreakpointBudget { budget: usize },

    #[error("tau = {tau} lies below the path end {tau_stop}")]
    TauBelowStop { tau: f64, tau_stop: f64 },

    #[error("path was computed for a different problem")]
    PathMismatch,

    #[error("path start is not nonnegative (min weight {min_weight:.3e})")]
    NotNonnegativeStart { min_weight: f64 },

    #[error("no breakpoint has exactly {k} active assets")]
    CardinalityUnreachable { k: usize },

    #[error("no breakpoint has between {k_min} and {k_max} active assets")]
    EmptyBin { k_min: usize, k_max: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("degenerate panel: {0}")]
    DegeneratePanel(String),

    #[error("current portfolio weights sum to {sum}, expected 1")]
    CurrentPortfolioInvalid { sum: f64 },

    #[error("malformed row {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("row {line} has {actual} values, expected {expected}")]
    WrongColumnCount {
        line: usize,
        expected: usize,
        actual: usize,
    },

    #[error("no monthly data found")]
    EmptyFile,

    #[error("window {start} + {length} months is outside the panel")]
    WindowOutOfRange { start: String, length: usize },

    #[error("return series has zero volatility")]
    ZeroVolatility,

    #[error("oracle found no feasible sign pattern")]
    NoFeasiblePattern,

    #[error("iterative oracle did not converge (objective change {last_change:.3e})")]
    NotConverged { last_change: f64 },
}

impl Error {
    /// Stable variant name, printed by the CLI on failure.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidProblem(_) => "InvalidProblem",
            Error::InfeasibleConstraints { .. } => "InfeasibleConstraints",
            Error::DependentConstraints { .. } => "DependentConstraints",
            Error::SingularActiveSystem { .. } => "SingularActiveSystem",
            Error::DegenerateTie { .. } => "DegenerateTie",
            Error::EpsilonPhaseStall { .. } => "EpsilonPhaseStall",
            Error::BreakpointBudget { .. } => "BreakpointBudget",
            Error::TauBelowStop { .. } => "TauBelowStop",
            Error::PathMismatch => "PathMismatch",
            Error::NotNonnegativeStart { .. } => "NotNonnegativeStart",
            Error::CardinalityUnreachable { .. } => "CardinalityUnreachable",
            Error::EmptyBin { .. } => "EmptyBin",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::DegeneratePanel(_) => "DegeneratePanel",
            Error::CurrentPortfolioInvalid { .. } => "CurrentPortfolioInvalid",
            Error::MalformedRow { .. } => "MalformedRow",
            Error::WrongColumnCount { .. } => "WrongColumnCount",
            Error::EmptyFile => "EmptyFile",
            Error::WindowOutOfRange { .. } => "WindowOutOfRange",
            Error::ZeroVolatility => "ZeroVolatility",
            Error::NoFeasiblePattern => "NoFeasiblePattern",
            Error::NotConverged { .. } => "NotConverged",
        }
    }

    /// True for errors caused by malformed input rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidProblem(_)
                | Error::LengthMismatch { .. }
                | Error::MalformedRow { .. }
                | Error::WrongColumnCount { .. }
                | Error::EmptyFile
                | Error::WindowOutOfRange { .. }
                | Error::CurrentPortfolioInvalid { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
