//! Rolling out-of-sample exercise: build a portfolio once a year from the
//! preceding training window, hold it for twelve months, and pool the
//! monthly returns over evaluation periods.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::market_data::{ReturnPanel, YearMonth};
use crate::portfolio::{select_exact_k, MarkowitzSpec, PortfolioPath, PortfolioSelection, SelectionPolicy};

/// Months a portfolio is held after construction.
pub const HOLDING_MONTHS: usize = 12;

/// Length of the default break-out periods.
pub const BREAKOUT_MONTHS: i64 = 60;

/// Inclusive month range.
pub type Period = (YearMonth, YearMonth);

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    pub first_construction: YearMonth,
    pub last_construction: YearMonth,
    pub training_months: usize,
    pub policy: SelectionPolicy,
    /// `None` derives the full holding range followed by 5-year break-outs.
    pub evaluation_periods: Option<Vec<Period>>,
    /// Also evaluate exact-K selection for every K in this range.
    pub sharpe_k_range: Option<(usize, usize)>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            first_construction: YearMonth { year: 1976, month: 6 },
            last_construction: YearMonth { year: 2005, month: 6 },
            training_months: 60,
            policy: SelectionPolicy::NoShort,
            evaluation_periods: None,
            sharpe_k_range: None,
        }
    }
}

impl BacktestConfig {
    pub fn construction_months(&self) -> Vec<YearMonth> {
        let mut out = Vec::new();
        let mut c = self.first_construction;
        while c <= self.last_construction {
            out.push(c);
            c = c.add_months(12);
        }
        out
    }

    /// Whole holding range first, then consecutive 5-year blocks when there
    /// is more than one.
    pub fn periods(&self) -> Vec<Period> {
        if let Some(p) = &self.evaluation_periods {
            return p.clone();
        }
        let start = self.first_construction.next();
        let end = self.last_construction.add_months(HOLDING_MONTHS as i64);
        let mut out = vec![(start, end)];
        if start.months_until(end) + 1 > BREAKOUT_MONTHS {
            let mut s = start;
            while s <= end {
                let e = s.add_months(BREAKOUT_MONTHS - 1).min(end);
                out.push((s, e));
                s = e.next();
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.training_months < 2 {
            return Err(Error::InvalidProblem("training window needs at least 2 months".into()));
        }
        let gap = self.first_construction.months_until(self.last_construction);
        if gap < 0 || gap % 12 != 0 {
            return Err(Error::InvalidProblem(format!(
                "construction months {} and {} must be a whole number of years apart",
                self.first_construction, self.last_construction
            )));
        }
        if let Some((a, b)) = self.sharpe_k_range {
            if a > b {
                return Err(Error::InvalidProblem(format!("empty K range {a}..{b}")));
            }
        }
        for (s, e) in self.periods() {
            if s > e {
                return Err(Error::InvalidProblem(format!("period {s}..{e} is empty")));
            }
        }
        Ok(())
    }
}

/// `MM/YY-MM/YY`.
pub fn period_label(period: &Period) -> String {
    let f = |m: &YearMonth| format!("{:02}/{:02}", m.month, m.year.rem_euclid(100));
    format!("{}-{}", f(&period.0), f(&period.1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceStats {
    pub mean_monthly: f64,
    pub std_monthly: f64,
    pub sharpe: f64,
    pub period: Period,
    pub n_months: usize,
}

/// Mean, population standard deviation and their ratio.
pub fn compute_stats(returns: &[f64], period: Period) -> Result<PerformanceStats> {
    let n = returns.len();
    if n < 2 {
        return Err(Error::InvalidProblem(format!("period {} has {n} months, need 2", period_label(&period))));
    }
    let mean = returns.iter().sum::<f64>() / n as f64;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    // A constant series leaves only rounding noise in the deviations.
    if !(std > 1e-14 * mean.abs()) {
        return Err(Error::ZeroVolatility);
    }
    Ok(PerformanceStats {
        mean_monthly: mean,
        std_monthly: std,
        sharpe: mean / std,
        period,
        n_months: n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct YearResult {
    pub construction: YearMonth,
    pub target_return: f64,
    pub n_breakpoints: usize,
    pub selection: Result<PortfolioSelection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonthlyReturn {
    pub month: YearMonth,
    /// `None` when that year's selection failed.
    pub strategy: Option<f64>,
    pub benchmark: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodStats {
    pub period: Period,
    pub strategy: Result<PerformanceStats>,
    pub benchmark: Result<PerformanceStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharpeAtK {
    pub k: usize,
    pub stats: Result<PerformanceStats>,
    /// Construction years where no breakpoint had exactly `k` assets.
    pub failed_years: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub config: BacktestConfig,
    pub years: Vec<YearResult>,
    pub monthly: Vec<MonthlyReturn>,
    pub stats: Vec<PeriodStats>,
    pub sharpe_vs_k: Vec<SharpeAtK>,
}

impl BacktestReport {
    /// Statistics of the first evaluation period (the whole range by default).
    pub fn full_period(&self) -> &PeriodStats {
        &self.stats[0]
    }

    pub fn failures(&self) -> impl Iterator<Item = (&YearMonth, &Error)> {
        self.years
            .iter()
            .filter_map(|y| y.selection.as_ref().err().map(|e| (&y.construction, e)))
    }

    /// `(construction month, active count)` for the successful years.
    pub fn active_counts(&self) -> Vec<(YearMonth, usize)> {
        self.years
            .iter()
            .filter_map(|y| y.selection.as_ref().ok().map(|s| (y.construction, s.active_count)))
            .collect()
    }

    pub fn strategy_series(&self) -> Vec<(YearMonth, f64)> {
        self.monthly.iter().filter_map(|m| m.strategy.map(|v| (m.month, v))).collect()
    }
}

fn stats_over(series: impl Iterator<Item = (YearMonth, f64)>, period: Period) -> Result<PerformanceStats> {
    let values: Vec<f64> = series
        .filter(|(m, _)| *m >= period.0 && *m <= period.1)
        .map(|(_, v)| v)
        .collect();
    compute_stats(&values, period)
}

fn portfolio_return(w: &DVector<f64>, row: &DVector<f64>) -> f64 {
    w.dot(row)
}

/// Runs the yearly construction and holding loop over `panel`.
pub fn run_exercise(panel: &ReturnPanel, config: &BacktestConfig) -> Result<BacktestReport> {
    config.validate()?;
    let constructions = config.construction_months();
    let training = config.training_months;
    let first_train = config.first_construction.add_months(1 - training as i64);
    let horizon = config.first_construction.months_until(config.last_construction) as usize + HOLDING_MONTHS + training;
    // One contiguous check covers every training and holding window.
    panel.window(first_train, horizon)?;

    let n = panel.n_assets() as f64;
    let ks: Vec<usize> = config.sharpe_k_range.map_or(Vec::new(), |(a, b)| (a..=b).collect());
    let mut years = Vec::with_capacity(constructions.len());
    let mut monthly = Vec::with_capacity(constructions.len() * HOLDING_MONTHS);
    let mut k_series: Vec<Vec<(YearMonth, f64)>> = vec![Vec::new(); ks.len()];
    let mut k_failed = vec![0usize; ks.len()];

    for &c in &constructions {
        let window = panel.window(c.add_months(1 - training as i64), training)?;
        let spec = MarkowitzSpec::equal_weight_target(window);
        let target_return = spec.target_return;
        let path = PortfolioPath::from_markowitz(&spec);
        let n_breakpoints = path.as_ref().map_or(0, |p| p.path.breakpoints.len());
        let selection = path.as_ref().map_err(Clone::clone).and_then(|p| config.policy.select(p));
        if let Err(e) = &selection {
            log::warn!("construction {c}: {e}");
        }

        let first_hold = panel.position(c.next()).expect("covered by the range check");
        let rows: Vec<DVector<f64>> = (0..HOLDING_MONTHS).map(|h| panel.row(first_hold + h)).collect();
        for (h, row) in rows.iter().enumerate() {
            monthly.push(MonthlyReturn {
                month: c.add_months(h as i64 + 1),
                strategy: selection.as_ref().ok().map(|s| portfolio_return(&s.weights, row)),
                benchmark: row.sum() / n,
            });
        }
        for (slot, &k) in ks.iter().enumerate() {
            match path.as_ref().map_err(Clone::clone).and_then(|p| select_exact_k(p, k)) {
                Ok(s) => {
                    for (h, row) in rows.iter().enumerate() {
                        k_series[slot].push((c.add_months(h as i64 + 1), portfolio_return(&s.weights, row)));
                    }
                }
                Err(_) => k_failed[slot] += 1,
            }
        }
        years.push(YearResult {
            construction: c,
            target_return,
            n_breakpoints,
            selection,
        });
    }

    let stats = config
        .periods()
        .into_iter()
        .map(|period| PeriodStats {
            period,
            strategy: stats_over(monthly.iter().filter_map(|m| m.strategy.map(|v| (m.month, v))), period),
            benchmark: stats_over(monthly.iter().map(|m| (m.month, m.benchmark)), period),
        })
        .collect();
    let full = config.periods()[0];
    let sharpe_vs_k = ks
        .iter()
        .enumerate()
        .map(|(slot, &k)| SharpeAtK {
            k,
            stats: stats_over(k_series[slot].iter().copied(), full),
            failed_years: k_failed[slot],
        })
        .collect();

    Ok(BacktestReport {
        config: config.clone(),
        years,
        monthly,
        stats,
        sharpe_vs_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alternating_series_has_zero_sharpe() {
        let x: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 0.3 } else { -0.3 }).collect();
        let p = (YearMonth { year: 2000, month: 1 }, YearMonth { year: 2000, month: 10 });
        let s = compute_stats(&x, p).unwrap();
        assert_eq!(s.mean_monthly, 0.0);
        assert_eq!(s.sharpe, 0.0);
        assert!((s.std_monthly - 0.3).abs() < 1e-15);
    }

    #[test]
    fn constant_series_has_no_sharpe() {
        let p = (YearMonth { year: 2000, month: 1 }, YearMonth { year: 2000, month: 12 });
        assert_eq!(compute_stats(&[0.1; 12], p), Err(Error::ZeroVolatility));
        assert_eq!(compute_stats(&[0.0; 12], p), Err(Error::ZeroVolatility));
        assert!(compute_stats(&[0.1], p).is_err());
    }

    #[test]
    fn default_periods() {
        let c = BacktestConfig::default();
        let p = c.periods();
        assert_eq!(p.len(), 7);
        assert_eq!(period_label(&p[0]), "07/76-06/06");
        assert_eq!(period_label(&p[1]), "07/76-06/81");
        assert_eq!(period_label(&p[6]), "07/01-06/06");
        assert_eq!(c.construction_months().len(), 30);
    }

    #[test]
    fn single_year_has_one_period() {
        let c = BacktestConfig {
            first_construction: YearMonth { year: 1990, month: 6 },
            last_construction: YearMonth { year: 1990, month: 6 },
            ..BacktestConfig::default()
        };
        assert_eq!(c.periods().len(), 1);
        assert_eq!(period_label(&c.periods()[0]), "07/90-06/91");
    }
}
