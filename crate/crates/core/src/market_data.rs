//! Monthly return panels: Fama-French ingestion, canonical CSV, moments.

use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Missing-value marker used in the Fama-French files.
pub const MISSING_SENTINEL: f64 = -99.99;

/// Monthly percent returns are multiplied by this before conversion to decimals.
pub const ANNUALIZATION: f64 = 12.0;

/// A calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidProblem(format!("month {month} out of range")));
        }
        Ok(Self { year, month })
    }

    fn index(self) -> i64 {
        i64::from(self.year) * 12 + i64::from(self.month) - 1
    }

    fn from_index(k: i64) -> Self {
        Self {
            year: k.div_euclid(12) as i32,
            month: (k.rem_euclid(12) + 1) as u32,
        }
    }

    pub fn add_months(self, k: i64) -> Self {
        Self::from_index(self.index() + k)
    }

    pub fn next(self) -> Self {
        self.add_months(1)
    }

    /// Number of months from `self` to `other` (negative if `other` is earlier).
    pub fn months_until(self, other: YearMonth) -> i64 {
        other.index() - self.index()
    }

    /// Parses the `YYYYMM` integer layout.
    pub fn from_yyyymm(v: u32) -> Result<Self> {
        Self::new((v / 100) as i32, v % 100)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    /// Accepts `YYYY-MM` and `YYYYMM`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidProblem(format!("cannot parse month '{s}'"));
        if let Some((y, m)) = s.split_once('-') {
            let year = y.parse().map_err(|_| bad())?;
            let month = m.parse().map_err(|_| bad())?;
            return Self::new(year, month).map_err(|_| bad());
        }
        if s.len() == 6 && s.bytes().all(|b| b.is_ascii_digit()) {
            return Self::from_yyyymm(s.parse().map_err(|_| bad())?).map_err(|_| bad());
        }
        Err(bad())
    }
}

/// `T x N` decimal returns with month labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    returns: DMatrix<f64>,
    dates: Vec<YearMonth>,
    asset_names: Vec<String>,
}

impl ReturnPanel {
    pub fn new(returns: DMatrix<f64>, dates: Vec<YearMonth>, asset_names: Vec<String>) -> Result<Self> {
        let (t, n) = returns.shape();
        if t == 0 || n == 0 {
            return Err(Error::EmptyFile);
        }
        if dates.len() != t {
            return Err(Error::LengthMismatch {
                expected: t,
                actual: dates.len(),
            });
        }
        if asset_names.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: asset_names.len(),
            });
        }
        if dates.windows(2).any(|d| d[0] >= d[1]) {
            return Err(Error::InvalidProblem("dates must be strictly increasing".into()));
        }
        if returns.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidProblem("non-finite return".into()));
        }
        Ok(Self {
            returns,
            dates,
            asset_names,
        })
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn dates(&self) -> &[YearMonth] {
        &self.dates
    }

    pub fn asset_names(&self) -> &[String] {
        &self.asset_names
    }

    pub fn n_periods(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }

    pub fn first_month(&self) -> YearMonth {
        self.dates[0]
    }

    pub fn last_month(&self) -> YearMonth {
        *self.dates.last().unwrap()
    }

    pub fn position(&self, month: YearMonth) -> Option<usize> {
        self.dates.binary_search(&month).ok()
    }

    /// Row of returns for one month.
    pub fn row(&self, t: usize) -> DVector<f64> {
        self.returns.row(t).transpose()
    }

    /// `length` consecutive months starting at `start`.
    pub fn window(&self, start: YearMonth, length: usize) -> Result<ReturnPanel> {
        let out_of_range = || Error::WindowOutOfRange {
            start: start.to_string(),
            length,
        };
        if length == 0 {
            return Err(out_of_range());
        }
        let i = self.position(start).ok_or_else(out_of_range)?;
        if i + length > self.n_periods() {
            return Err(out_of_range());
        }
        let dates = self.dates[i..i + length].to_vec();
        if start.months_until(dates[length - 1]) != length as i64 - 1 {
            // A dropped month inside the range.
            return Err(out_of_range());
        }
        Ok(Self {
            returns: self.returns.rows(i, length).into_owned(),
            dates,
            asset_names: self.asset_names.clone(),
        })
    }

    /// Sub-panel restricted to the given asset columns.
    pub fn select_assets(&self, cols: &[usize]) -> Result<ReturnPanel> {
        if cols.is_empty() || cols.iter().any(|&c| c >= self.n_assets()) {
            return Err(Error::InvalidProblem("asset selection out of range".into()));
        }
        let returns = DMatrix::from_fn(self.n_periods(), cols.len(), |i, j| self.returns[(i, cols[j])]);
        let names = cols.iter().map(|&c| self.asset_names[c].clone()).collect();
        Self::new(returns, self.dates.clone(), names)
    }

    /// Per-asset sample means, summed in date order.
    pub fn column_means(&self) -> DVector<f64> {
        let t = self.n_periods() as f64;
        DVector::from_fn(self.n_assets(), |j, _| {
            let mut s = 0.0;
            for i in 0..self.n_periods() {
                s += self.returns[(i, j)];
            }
            s / t
        })
    }

    /// Canonical CSV: `date,<names>` header, `YYYY-MM` dates, 17 significant digits.
    pub fn to_canonical_csv(&self) -> String {
        let mut out = String::from("date");
        for name in &self.asset_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, d) in self.dates.iter().enumerate() {
            out.push_str(&d.to_string());
            for j in 0..self.n_assets() {
                out.push_str(&format!(",{:.16e}", self.returns[(i, j)]));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_canonical_csv(text: &str) -> Result<ReturnPanel> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::EmptyFile)?;
        let mut cols = header.split(',');
        if cols.next().map(str::trim) != Some("date") {
            return Err(Error::MalformedRow {
                line: 1,
                reason: "header must start with 'date'".into(),
            });
        }
        let names: Vec<String> = cols.map(|c| c.trim().to_string()).collect();
        let n = names.len();
        let mut dates = Vec::new();
        let mut values = Vec::new();
        for (k, line) in lines {
            let lineno = k + 1;
            let mut fields = line.split(',');
            let date_field = fields.next().unwrap_or("");
            let date: YearMonth = date_field.parse().map_err(|_| Error::MalformedRow {
                line: lineno,
                reason: format!("bad date '{date_field}'"),
            })?;
            let row: Vec<&str> = fields.collect();
            if row.len() != n {
                return Err(Error::WrongColumnCount {
                    line: lineno,
                    expected: n,
                    actual: row.len(),
                });
            }
            for f in row {
                values.push(parse_number(f, lineno)?);
            }
            dates.push(date);
        }
        if dates.is_empty() {
            return Err(Error::EmptyFile);
        }
        let returns = DMatrix::from_row_slice(dates.len(), n, &values);
        Self::new(returns, dates, names)
    }
}

fn parse_number(token: &str, line: usize) -> Result<f64> {
    let token = token.trim();
    token
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::MalformedRow {
            line,
            reason: format!("non-numeric value '{token}'"),
        })
}

fn tokens(line: &str) -> Vec<&str> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .collect()
}

fn is_month_token(t: &str) -> bool {
    t.len() == 6 && t.bytes().all(|b| b.is_ascii_digit())
}

/// Reads the first monthly block of a Fama-French return file (comma or
/// whitespace separated, percent units). Values become annualized decimals,
/// `v * 12 / 100`. Months containing the missing-value sentinel are dropped.
/// With `expected_assets = None` the width of the first data row is used.
pub fn parse_ff_file(reader: impl BufRead, expected_assets: Option<usize>) -> Result<ReturnPanel> {
    let mut header: Option<Vec<String>> = None;
    let mut width = expected_assets;
    let mut dates = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut in_block = false;

    for (k, line) in reader.lines().enumerate() {
        let lineno = k + 1;
        let line = line.map_err(|e| Error::MalformedRow {
            line: lineno,
            reason: e.to_string(),
        })?;
        let toks = tokens(&line);
        let is_data = toks.first().is_some_and(|t| is_month_token(t));
        if !is_data {
            if in_block {
                break;
            }
            if !toks.is_empty() {
                header = Some(toks.iter().map(|t| t.to_string()).collect());
            }
            continue;
        }
        in_block = true;
        let month_val: u32 = toks[0].parse().expect("digits");
        let date = YearMonth::from_yyyymm(month_val).map_err(|_| Error::MalformedRow {
            line: lineno,
            reason: format!("bad month '{}'", toks[0]),
        })?;
        let n = *width.get_or_insert(toks.len() - 1);
        if toks.len() - 1 != n {
            return Err(Error::WrongColumnCount {
                line: lineno,
                expected: n,
                actual: toks.len() - 1,
            });
        }
        let row: Vec<f64> = toks[1..]
            .iter()
            .map(|t| parse_number(t, lineno))
            .collect::<Result<_>>()?;
        if row.contains(&MISSING_SENTINEL) {
            log::warn!("dropping {date}: missing value");
            continue;
        }
        if dates.last().is_some_and(|d| *d >= date) {
            return Err(Error::MalformedRow {
                line: lineno,
                reason: format!("month {date} out of order"),
            });
        }
        dates.push(date);
        values.extend(row.iter().map(|v| v * ANNUALIZATION / 100.0));
    }

    let n = width.unwrap_or(0);
    if dates.is_empty() || n == 0 {
        return Err(Error::EmptyFile);
    }
    let names = match header {
        Some(h) if h.len() == n => h,
        _ => (1..=n).map(|i| format!("A{i}")).collect(),
    };
    let returns = DMatrix::from_row_slice(dates.len(), n, &values);
    ReturnPanel::new(returns, dates, names)
}

/// Reads either the canonical CSV or a Fama-French file.
pub fn read_panel(text: &str, expected_assets: Option<usize>) -> Result<ReturnPanel> {
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    if first.trim_start().starts_with("date,") {
        let panel = ReturnPanel::from_canonical_csv(text)?;
        if let Some(n) = expected_assets.filter(|&n| n != panel.n_assets()) {
            return Err(Error::WrongColumnCount {
                line: 1,
                expected: n,
                actual: panel.n_assets(),
            });
        }
        return Ok(panel);
    }
    parse_ff_file(text.as_bytes(), expected_assets)
}

/// Sample mean and covariance (divisor `T`) of a panel.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimates {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub window: (YearMonth, YearMonth),
}

pub fn estimate_moments(panel: &ReturnPanel) -> MomentEstimates {
    let mean = panel.column_means();
    let t = panel.n_periods();
    let n = panel.n_assets();
    let r = panel.returns();
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut s = 0.0;
            for k in 0..t {
                s += (r[(k, i)] - mean[i]) * (r[(k, j)] - mean[j]);
            }
            cov[(i, j)] = s / t as f64;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    MomentEstimates {
        mean,
        covariance: cov,
        window: (panel.first_month(), panel.last_month()),
    }
}
