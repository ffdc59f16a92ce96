mod common;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sparsefolio::backtest::{compute_stats, run_exercise, BacktestConfig};
use sparsefolio::market_data::{estimate_moments, ReturnPanel, YearMonth};
use sparsefolio::portfolio::SelectionPolicy;
use sparsefolio::Error;

fn ym(y: i32, m: u32) -> YearMonth {
    YearMonth::new(y, m).unwrap()
}

fn long_panel(seed: u64, n: usize) -> ReturnPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    common::synthetic_panel(&mut rng, n, 420, ym(1971, 7))
}

#[test]
fn full_exercise_on_synthetic_panel() {
    let panel = long_panel(11, 12);
    let config = BacktestConfig::default();
    let report = run_exercise(&panel, &config).unwrap();
    assert_eq!(report.years.len(), 30);
    let f: Vec<_> = report.failures().collect();
    assert!(f.is_empty(), "{f:?}");
    assert_eq!(report.monthly.len(), 360);
    assert_eq!(report.strategy_series().len(), 12 * report.years.len());

    for y in &report.years {
        let sel = y.selection.as_ref().unwrap();
        assert!(sel.weights.iter().all(|&w| w >= 0.0));
        let train = panel.window(y.construction.add_months(-59), 60).unwrap();
        let mu = estimate_moments(&train).mean;
        assert!((sel.weights.sum() - 1.0).abs() < 1e-10);
        assert!((mu.dot(&sel.weights) - y.target_return).abs() < 1e-10);
    }

    for m in &report.monthly {
        let row = panel.row(panel.position(m.month).unwrap());
        assert!((m.benchmark - row.mean()).abs() < 1e-12);
    }

    // The full-period mean is the month-weighted mean of the break-outs.
    let full = report.full_period().strategy.as_ref().unwrap();
    assert_eq!(full.n_months, 360);
    let mut weighted = 0.0;
    let mut months = 0;
    for p in &report.stats[1..] {
        let s = p.strategy.as_ref().unwrap();
        weighted += s.mean_monthly * s.n_months as f64;
        months += s.n_months;
        assert!((s.sharpe * s.std_monthly - s.mean_monthly).abs() < 1e-12);
    }
    assert_eq!(months, 360);
    assert!((weighted / months as f64 - full.mean_monthly).abs() < 1e-12);
}

#[test]
fn exercise_is_deterministic() {
    let panel = long_panel(5, 8);
    let config = BacktestConfig {
        policy: SelectionPolicy::Binned(3, 6),
        sharpe_k_range: Some((2, 6)),
        ..BacktestConfig::default()
    };
    let a = run_exercise(&panel, &config).unwrap();
    let b = run_exercise(&panel, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.sharpe_vs_k.len(), 5);
}

#[test]
fn single_construction_year() {
    let panel = long_panel(3, 6);
    let config = BacktestConfig {
        first_construction: ym(1990, 6),
        last_construction: ym(1990, 6),
        ..BacktestConfig::default()
    };
    let report = run_exercise(&panel, &config).unwrap();
    assert_eq!(report.years.len(), 1);
    assert_eq!(report.monthly.len(), 12);
    assert_eq!(report.stats.len(), 1);
}

#[test]
fn single_asset_holds_the_asset() {
    let full = long_panel(4, 3);
    let panel = full.select_assets(&[1]).unwrap();
    let report = run_exercise(&panel, &BacktestConfig::default()).unwrap();
    for y in &report.years {
        assert_eq!(y.selection.as_ref().unwrap().weights, DVector::from_element(1, 1.0));
    }
    for m in &report.monthly {
        let r = panel.row(panel.position(m.month).unwrap())[0];
        assert_eq!(m.strategy, Some(r));
        assert_eq!(m.benchmark, r);
    }
}

#[test]
fn failed_years_are_reported() {
    let panel = long_panel(9, 6);
    let config = BacktestConfig {
        policy: SelectionPolicy::ExactK(6),
        ..BacktestConfig::default()
    };
    let report = run_exercise(&panel, &config).unwrap();
    let failed = report.failures().count();
    let ok = report.years.len() - failed;
    assert_eq!(report.strategy_series().len(), 12 * ok);
    for (_, e) in report.failures() {
        assert!(matches!(e, Error::CardinalityUnreachable { k: 6 }));
    }
}

#[test]
fn panel_must_cover_the_exercise() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let short = common::synthetic_panel(&mut rng, 4, 200, ym(1971, 7));
    assert!(matches!(
        run_exercise(&short, &BacktestConfig::default()),
        Err(Error::WindowOutOfRange { .. })
    ));
}

#[test]
fn stats_match_two_pass_oracle() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(360);
    let x: Vec<f64> = (0..360).map(|_| rng.random_range(-0.5..0.7)).collect();
    let s = compute_stats(&x, (ym(1976, 7), ym(2006, 6))).unwrap();
    let mut sum = 0.0;
    for v in &x {
        sum += v;
    }
    let mean = sum / 360.0;
    let mut ss = 0.0;
    for v in &x {
        ss += (v - mean).powi(2);
    }
    let std = (ss / 360.0).sqrt();
    assert!((s.mean_monthly - mean).abs() < 1e-12);
    assert!((s.std_monthly - std).abs() < 1e-12);
    assert!((s.sharpe - mean / std).abs() < 1e-12);
}

fn assert_no_failures(seed: u64, n: usize, policy: SelectionPolicy) {
    let panel = long_panel(seed, n);
    let config = BacktestConfig {
        policy,
        ..BacktestConfig::default()
    };
    let report = run_exercise(&panel, &config).unwrap();
    let f: Vec<_> = report.failures().map(|(c, e)| format!("{c}: {e}")).collect();
    assert!(f.is_empty(), "n={n} seed={seed}: {f:?}");
}

#[test]
fn medium_panels_never_fail() {
    for (seed, n) in [(21, 5), (22, 9), (23, 15), (24, 30)] {
        assert_no_failures(seed, n, SelectionPolicy::NoShort);
    }
}

#[test]
fn industry_sized_panel_never_fails() {
    assert_no_failures(25, 48, SelectionPolicy::NoShort);
}

#[test]
fn hundred_asset_panel_never_fails() {
    assert_no_failures(26, 100, SelectionPolicy::Binned(10, 20));
}
