//! Command-line front end: `solve`, `backtest`, `track`, `hedge`, `adjust`.

mod docs;
pub mod output;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use crate::backtest::{period_label, run_exercise, BacktestConfig, HOLDING_MONTHS};
use crate::error::Error;
use crate::homotopy::solve_path;
use crate::market_data::{read_panel, ReturnPanel, YearMonth};
use crate::path::SolutionPath;
use crate::portfolio::{
    build_adjustment_problem, build_hedging_problem, build_tracking_problem, HedgingScenario, MarkowitzSpec,
    PortfolioPath, SelectionPolicy,
};
use crate::problem::{AffineConstraints, PenalizedProblem};
use crate::{solve_constrained_path, PathEvent};
use docs::{matrix, vector};

/// Exit status for malformed input.
pub const EXIT_INPUT: i32 = 2;
/// Exit status for numerical failures.
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub name: String,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            name: "InputError".into(),
            message: message.into(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            code: EXIT_INPUT,
            name: "IoError".into(),
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_input_error() { EXIT_INPUT } else { EXIT_SOLVER },
            name: e.name().into(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sparsefolio", version, about = "Exact l1 solution paths and sparse portfolios")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Directory for output files; without it the path goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Round percentages to integers.
    #[arg(long)]
    pub paper_mode: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solution path of a problem given as JSON.
    Solve {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Rolling yearly portfolio construction on a monthly return file.
    Backtest(BacktestArgs),
    /// Sparse index tracking with per-asset spreads.
    Track {
        input: PathBuf,
        /// Return panel (canonical CSV or Fama-French layout) replacing `returns`.
        #[arg(long)]
        panel: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Hedging an existing position over probability-weighted scenarios.
    Hedge {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Adjusting an existing portfolio with penalized trades.
    Adjust {
        input: PathBuf,
        #[arg(long)]
        panel: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    /// Return file (canonical CSV or Fama-French layout).
    pub data: Option<PathBuf>,
    /// TOML file with the same settings as the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// no-short, exact-k or bin.
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Bin as `KMIN,KMAX`.
    #[arg(long, value_parser = parse_pair)]
    pub bin: Option<(usize, usize)>,
    /// First construction month (default 1976-06).
    #[arg(long)]
    pub start: Option<String>,
    /// Last month held (default 2006-06).
    #[arg(long)]
    pub end: Option<String>,
    #[arg(long)]
    pub training_months: Option<usize>,
    /// Also report exact-K Sharpe ratios for `KMIN,KMAX`.
    #[arg(long, value_parser = parse_pair)]
    pub sharpe_k: Option<(usize, usize)>,
    /// Number of asset columns the data file must have.
    #[arg(long)]
    pub expected_assets: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected A,B, got '{s}'"))?;
    let p = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("'{x}': {e}"));
    Ok((p(a)?, p(b)?))
}

/// Parses `args` (including the program name), runs the command, and
/// returns the exit status. Errors are reported on stderr.
pub fn run_from<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}: {}", e.name, e.message);
            e.code
        }
    }
}

pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    run_from(std::env::args_os(), &mut lock)
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Solve { input, common } => cmd_solve(&input, &common, stdout),
        Command::Backtest(args) => cmd_backtest(args, stdout),
        Command::Track { input, panel, common } => cmd_track(&input, panel.as_deref(), &common, stdout),
        Command::Hedge { input, common } => cmd_hedge(&input, &common, stdout),
        Command::Adjust { input, panel, common } => cmd_adjust(&input, panel.as_deref(), &common, stdout),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn read_doc<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError {
        code: EXIT_INPUT,
        name: "ParseError".into(),
        message: format!("{}: {e}", path.display()),
    })
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let p = dir.join(name);
    fs::write(&p, content).map_err(|e| CliError::io(&p, e))
}

fn emit(stdout: &mut dyn Write, text: &str) -> Result<(), CliError> {
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn path_text(path: &SolutionPath, format: Format) -> (String, &'static str) {
    match format {
        Format::Json => (output::to_json_string(&output::path_json(path)), "path.json"),
        Format::Csv => (output::path_csv(path), "path.csv"),
    }
}

/// Writes the path, plus the frontier when an output directory is given.
fn emit_path(
    path: &SolutionPath,
    frontier: Option<String>,
    common: &Common,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let (text, name) = path_text(path, common.format);
    match &common.out {
        Some(dir) => {
            write_file(dir, name, &text)?;
            if let Some(f) = frontier {
                write_file(dir, "frontier.csv", &f)?;
            }
            let stop = path.breakpoints.last().map_or(0.0, |b| b.tau);
            let stopped = path.breakpoints.last().is_some_and(|b| b.events.contains(&PathEvent::Stop));
            emit(
                stdout,
                &format!(
                    "{} breakpoints, tau {} .. {}{}\n",
                    path.breakpoints.len(),
                    path.tau_max(),
                    stop,
                    if stopped { "" } else { " (cap reached)" }
                ),
            )
        }
        None => emit(stdout, &text),
    }
}

fn panel_from_rows(rows: &docs::Rows) -> Result<ReturnPanel, CliError> {
    let r = matrix(rows, "returns")?;
    let start = YearMonth { year: 2000, month: 1 };
    let dates = (0..r.nrows()).map(|k| start.add_months(k as i64)).collect();
    let names = (0..r.ncols()).map(|j| format!("A{}", j + 1)).collect();
    Ok(ReturnPanel::new(r, dates, names)?)
}

fn load_panel(file: Option<&Path>, rows: Option<&docs::Rows>) -> Result<ReturnPanel, CliError> {
    match (file, rows) {
        (Some(f), _) => Ok(read_panel(&read_text(f)?, None)?),
        (None, Some(rows)) => panel_from_rows(rows),
        (None, None) => Err(CliError::input("no returns given (use --panel or a 'returns' field)")),
    }
}

fn cmd_solve(input: &Path, common: &Common, stdout: &mut dyn Write) -> Result<(), CliError> {
    let doc: docs::ProblemDoc = read_doc(input)?;
    let design = matrix(&doc.design, "design")?;
    let n = design.ncols();
    let weights = doc
        .penalty_weights
        .as_deref()
        .map_or_else(|| DVector::from_element(n, 1.0), vector);
    let problem = PenalizedProblem::with_weights(design, vector(&doc.target), weights, doc.tau_stop.unwrap_or(0.0))?;
    let constraints = match &doc.constraints {
        Some(c) if !c.matrix.is_empty() => AffineConstraints::new(matrix(&c.matrix, "constraints")?, vector(&c.rhs))?,
        Some(c) if !c.rhs.is_empty() => {
            return Err(CliError::input("constraint rhs given without matrix rows"));
        }
        _ => AffineConstraints::none(n),
    };
    if !constraints.is_empty() && constraints.n_vars() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: constraints.n_vars(),
        }
        .into());
    }
    let path = if constraints.is_empty() {
        solve_path(&problem)?
    } else {
        solve_constrained_path(&problem, &constraints)?
    };
    let frontier = output::frontier_csv(&problem, &path, "residual_sq", 1.0);
    emit_path(&path, Some(frontier), common, stdout)
}

fn cmd_track(input: &Path, panel: Option<&Path>, common: &Common, stdout: &mut dyn Write) -> Result<(), CliError> {
    let doc: docs::TrackDoc = read_doc(input)?;
    let panel = load_panel(panel, doc.returns.as_ref())?;
    let spreads = doc
        .spreads
        .as_deref()
        .map_or_else(|| DVector::from_element(panel.n_assets(), 1.0), vector);
    let problem = build_tracking_problem(&vector(&doc.index_returns), &panel, &spreads)?;
    let path = solve_path(&problem)?;
    let frontier = output::frontier_csv(&problem, &path, "tracking_error", problem.n_obs() as f64);
    emit_path(&path, Some(frontier), common, stdout)
}

fn cmd_hedge(input: &Path, common: &Common, stdout: &mut dyn Write) -> Result<(), CliError> {
    let doc: docs::HedgeDoc = read_doc(input)?;
    let x = matrix(&doc.pnl_unit, "pnl_unit")?;
    let spreads = doc
        .spreads
        .as_deref()
        .map_or_else(|| DVector::from_element(x.ncols(), 1.0), vector);
    let y = vector(&doc.pnl_existing);
    let scenario = match &doc.probabilities {
        Some(p) => HedgingScenario::new(y, x, vector(p), spreads)?,
        None => HedgingScenario::uniform(y, x, spreads)?,
    };
    let problem = build_hedging_problem(&scenario)?;
    let path = solve_path(&problem)?;
    let frontier = output::frontier_csv(&problem, &path, "scenario_variance", 1.0);
    emit_path(&path, Some(frontier), common, stdout)
}

fn cmd_adjust(input: &Path, panel: Option<&Path>, common: &Common, stdout: &mut dyn Write) -> Result<(), CliError> {
    let doc: docs::AdjustDoc = read_doc(input)?;
    let panel = load_panel(panel, doc.returns.as_ref())?;
    let mut spec = match doc.target_return {
        Some(rho) => MarkowitzSpec::new(panel, rho),
        None => MarkowitzSpec::equal_weight_target(panel),
    };
    if let Some(w) = &doc.penalty_weights {
        spec = spec.with_penalty_weights(vector(w));
    }
    let current = vector(&doc.current);
    let (problem, constraints) = build_adjustment_problem(&current, &spec)?;
    let solved = PortfolioPath::solve(problem, constraints)?;
    let frontier = output::frontier_csv(&solved.problem, &solved.path, "objective", 1.0);
    emit_path(&solved.path, Some(frontier), common, stdout)
}

fn parse_month(s: &str) -> Result<YearMonth, CliError> {
    s.parse::<YearMonth>().map_err(|e| CliError::input(e.to_string()))
}

fn parse_policy(name: &str, k: Option<usize>, bin: Option<(usize, usize)>) -> Result<SelectionPolicy, CliError> {
    match name {
        "no-short" => Ok(SelectionPolicy::NoShort),
        "exact-k" => k
            .map(SelectionPolicy::ExactK)
            .ok_or_else(|| CliError::input("--policy exact-k needs --k")),
        "bin" => bin
            .map(|(a, b)| SelectionPolicy::Binned(a, b))
            .ok_or_else(|| CliError::input("--policy bin needs --bin KMIN,KMAX")),
        other => Err(CliError::input(format!(
            "unknown policy '{other}' (expected no-short, exact-k or bin)"
        ))),
    }
}

fn cmd_backtest(args: BacktestArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let file: docs::BacktestFile = match &args.config {
        Some(p) => toml::from_str(&read_text(p)?).map_err(|e| CliError {
            code: EXIT_INPUT,
            name: "ParseError".into(),
            message: format!("{}: {e}", p.display()),
        })?,
        None => docs::BacktestFile::default(),
    };
    let data = args
        .data
        .or(file.data)
        .ok_or_else(|| CliError::input("no data file given"))?;
    let k = args.k.or(file.k);
    let bin = args.bin.or(file.bin.map(|[a, b]| (a, b)));
    let policy_name = args.policy.or(file.policy).unwrap_or_else(|| "no-short".into());
    let policy = parse_policy(&policy_name, k, bin)?;
    let defaults = BacktestConfig::default();
    let start = match args.start.or(file.start) {
        Some(s) => parse_month(&s)?,
        None => defaults.first_construction,
    };
    let end = match args.end.or(file.end) {
        Some(s) => parse_month(&s)?,
        None => defaults.last_construction.add_months(HOLDING_MONTHS as i64),
    };
    let periods = match &file.periods {
        Some(ps) => Some(
            ps.iter()
                .map(|[a, b]| Ok((parse_month(a)?, parse_month(b)?)))
                .collect::<Result<Vec<_>, CliError>>()?,
        ),
        None => None,
    };
    let config = BacktestConfig {
        first_construction: start,
        last_construction: end.add_months(-(HOLDING_MONTHS as i64)),
        training_months: args.training_months.or(file.training_months).unwrap_or(defaults.training_months),
        policy,
        evaluation_periods: periods,
        sharpe_k_range: args.sharpe_k.or(file.sharpe_k.map(|[a, b]| (a, b))),
    };
    let out = args.common.out.clone().or(file.out);
    let paper_mode = args.common.paper_mode || file.paper_mode.unwrap_or(false);
    let expected = args.expected_assets.or(file.expected_assets);

    let panel = read_panel(&read_text(&data)?, expected)?;
    let report = run_exercise(&panel, &config)?;

    if let Some(dir) = &out {
        if args.common.format == Format::Json {
            let json = output::report_json(&report, panel.asset_names());
            write_file(dir, "report.json", &output::to_json_string(&json))?;
        }
        write_file(dir, "table.csv", &output::table_csv(&report, paper_mode))?;
        write_file(dir, "active_counts.csv", &output::active_counts_csv(&report))?;
        write_file(dir, "monthly_returns.csv", &output::monthly_csv(&report))?;
        if config.sharpe_k_range.is_some() {
            write_file(dir, "sharpe_vs_k.csv", &output::sharpe_vs_k_csv(&report))?;
        }
    }

    for (c, e) in report.failures() {
        eprintln!("construction {c} failed: {}: {e}", e.name());
    }
    let full = report.full_period();
    let label = period_label(&full.period);
    let mut text = String::new();
    text.push_str(&format!(
        "{} construction years, {} failed\n",
        report.years.len(),
        report.failures().count()
    ));
    text.push_str(&output::stats_line("1/N", &label, &full.benchmark, paper_mode));
    text.push('\n');
    text.push_str(&output::stats_line(&config.policy.label(), &label, &full.strategy, paper_mode));
    text.push('\n');
    emit(stdout, &text)
}
