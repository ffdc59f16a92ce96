//! Machine-readable output: JSON with sorted keys and 17 significant digits,
//! CSV tables, and percent formatting for the terminal.

use std::io;

use nalgebra::DVector;
use serde_json::ser::Formatter;
use serde_json::{json, Map, Value};

use crate::backtest::{period_label, BacktestReport, PerformanceStats};
use crate::error::Error;
use crate::path::SolutionPath;
use crate::portfolio::PortfolioSelection;
use crate::problem::PenalizedProblem;

/// Writes every float in scientific notation with 17 significant digits.
struct FixedDigits;

impl Formatter for FixedDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", sci(value))
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// `{:.16e}`, the layout used for every float in machine output.
pub fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn to_json_string(value: &Value) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedDigits);
    serde::Serialize::serialize(value, &mut ser).expect("writing to memory");
    let mut s = String::from_utf8(out).expect("JSON is UTF-8");
    s.push('\n');
    s
}

fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

fn vector(v: &DVector<f64>) -> Value {
    Value::Array(v.iter().map(|&x| num(x)).collect())
}

pub fn error_json(e: &Error) -> Value {
    json!({ "name": e.name(), "message": e.to_string() })
}

pub fn path_json(path: &SolutionPath) -> Value {
    let bps: Vec<Value> = path
        .breakpoints
        .iter()
        .map(|bp| {
            json!({
                "tau": num(bp.tau),
                "weights": vector(&bp.weights),
                "multipliers": vector(&bp.multipliers),
                "residual_corr": vector(&bp.residual_corr),
                "active_set": bp.active_set,
                "events": bp.events.iter().map(|e| e.label()).collect::<Vec<_>>(),
                "l1_norm": num(bp.l1_norm()),
            })
        })
        .collect();
    json!({
        "problem_fingerprint": path.problem_fingerprint,
        "n_assets": path.n_assets(),
        "breakpoints": bps,
    })
}

/// One row per breakpoint: tau, events, active count, weights.
pub fn path_csv(path: &SolutionPath) -> String {
    let n = path.n_assets();
    let mut out = String::from("tau,events,active_count");
    for i in 0..n {
        out.push_str(&format!(",w{i}"));
    }
    out.push('\n');
    for bp in &path.breakpoints {
        let events: Vec<String> = bp.events.iter().map(|e| e.label()).collect();
        out.push_str(&format!("{},{},{}", sci(bp.tau), events.join(" "), bp.active_count()));
        for w in bp.weights.iter() {
            out.push_str(&format!(",{}", sci(*w)));
        }
        out.push('\n');
    }
    out
}

/// Per breakpoint: the quadratic term (divided by `divisor`) against the
/// weighted l1 cost `sum_i s_i |w_i|`.
pub fn frontier_csv(problem: &PenalizedProblem, path: &SolutionPath, quadratic_name: &str, divisor: f64) -> String {
    let mut out = format!("tau,{quadratic_name},weighted_l1,active_count\n");
    for bp in &path.breakpoints {
        out.push_str(&format!(
            "{},{},{},{}\n",
            sci(bp.tau),
            sci(problem.residual_sq(&bp.weights) / divisor),
            sci(problem.penalty(&bp.weights)),
            bp.active_count()
        ));
    }
    out
}

fn stats_json(s: &Result<PerformanceStats, Error>) -> Value {
    match s {
        Ok(s) => json!({
            "mean": num(s.mean_monthly),
            "std": num(s.std_monthly),
            "sharpe": num(s.sharpe),
            "n_months": s.n_months,
        }),
        Err(e) => json!({ "error": error_json(e) }),
    }
}

fn selection_json(s: &PortfolioSelection) -> Value {
    json!({
        "weights": vector(&s.weights),
        "tau": num(s.tau),
        "policy": s.policy.label(),
        "active_count": s.active_count,
        "objective_value": num(s.objective_value),
    })
}

pub fn report_json(report: &BacktestReport, asset_names: &[String]) -> Value {
    let c = &report.config;
    let years: Vec<Value> = report
        .years
        .iter()
        .map(|y| {
            let mut m = Map::new();
            m.insert("construction".into(), json!(y.construction.to_string()));
            m.insert("target_return".into(), num(y.target_return));
            m.insert("n_breakpoints".into(), json!(y.n_breakpoints));
            match &y.selection {
                Ok(s) => m.insert("selection".into(), selection_json(s)),
                Err(e) => m.insert("error".into(), error_json(e)),
            };
            Value::Object(m)
        })
        .collect();
    let periods: Vec<Value> = report
        .stats
        .iter()
        .map(|p| {
            json!({
                "label": period_label(&p.period),
                "start": p.period.0.to_string(),
                "end": p.period.1.to_string(),
                "strategy": stats_json(&p.strategy),
                "benchmark": stats_json(&p.benchmark),
            })
        })
        .collect();
    let monthly: Vec<Value> = report
        .monthly
        .iter()
        .map(|m| {
            json!({
                "month": m.month.to_string(),
                "strategy": m.strategy.map_or(Value::Null, num),
                "benchmark": num(m.benchmark),
            })
        })
        .collect();
    let sharpe_vs_k: Vec<Value> = report
        .sharpe_vs_k
        .iter()
        .map(|s| json!({ "k": s.k, "stats": stats_json(&s.stats), "failed_years": s.failed_years }))
        .collect();
    json!({
        "config": {
            "first_construction": c.first_construction.to_string(),
            "last_construction": c.last_construction.to_string(),
            "training_months": c.training_months,
            "policy": c.policy.label(),
        },
        "asset_names": asset_names,
        "years": years,
        "periods": periods,
        "monthly": monthly,
        "sharpe_vs_k": sharpe_vs_k,
        "failures": report.failures().count(),
    })
}

/// Percent with one decimal, or rounded to an integer for `--paper-mode`.
pub fn pct(x: f64, paper_mode: bool) -> String {
    if paper_mode {
        format!("{:.0}", x * 100.0)
    } else {
        format!("{:.1}", x * 100.0)
    }
}

fn stats_cells(s: &Result<PerformanceStats, Error>, paper_mode: bool) -> String {
    match s {
        Ok(s) => format!(
            "{},{},{}",
            pct(s.mean_monthly, paper_mode),
            pct(s.std_monthly, paper_mode),
            pct(s.sharpe, paper_mode)
        ),
        Err(_) => ",,".into(),
    }
}

/// Rows are evaluation periods; columns are m, sigma, S in percent for the
/// strategy and for the 1/N benchmark.
pub fn table_csv(report: &BacktestReport, paper_mode: bool) -> String {
    let p = report.config.policy.label();
    let mut out = format!("period,{p}_m,{p}_sigma,{p}_sharpe,equal_m,equal_sigma,equal_sharpe\n");
    for s in &report.stats {
        out.push_str(&format!(
            "{},{},{}\n",
            period_label(&s.period),
            stats_cells(&s.strategy, paper_mode),
            stats_cells(&s.benchmark, paper_mode)
        ));
    }
    out
}

pub fn active_counts_csv(report: &BacktestReport) -> String {
    let mut out = String::from("year,active_count\n");
    for (c, k) in report.active_counts() {
        out.push_str(&format!("{},{k}\n", c.year));
    }
    out
}

pub fn sharpe_vs_k_csv(report: &BacktestReport) -> String {
    let mut out = String::from("k,mean,std,sharpe,failed_years\n");
    for s in &report.sharpe_vs_k {
        match &s.stats {
            Ok(st) => out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.k,
                sci(st.mean_monthly),
                sci(st.std_monthly),
                sci(st.sharpe),
                s.failed_years
            )),
            Err(_) => out.push_str(&format!("{},,,,{}\n", s.k, s.failed_years)),
        }
    }
    out
}

pub fn monthly_csv(report: &BacktestReport) -> String {
    let mut out = String::from("month,strategy,benchmark\n");
    for m in &report.monthly {
        let s = m.strategy.map_or(String::new(), sci);
        out.push_str(&format!("{},{s},{}\n", m.month, sci(m.benchmark)));
    }
    out
}

/// Terminal line for one period: label, then m, sigma, S in percent.
pub fn stats_line(name: &str, label: &str, s: &Result<PerformanceStats, Error>, paper_mode: bool) -> String {
    match s {
        Ok(s) => format!(
            "{name} {label} {} {} {}",
            pct(s.mean_monthly, paper_mode),
            pct(s.std_monthly, paper_mode),
            pct(s.sharpe, paper_mode)
        ),
        Err(e) => format!("{name} {label} unavailable: {}", e.name()),
    }
}
