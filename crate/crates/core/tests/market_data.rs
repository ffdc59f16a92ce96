mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sparsefolio::market_data::{estimate_moments, parse_ff_file, read_panel, ReturnPanel, YearMonth};
use sparsefolio::Error;

fn ym(y: i32, m: u32) -> YearMonth {
    YearMonth::new(y, m).unwrap()
}

/// A file laid out like the published industry portfolio files: a text
/// preamble, a header row, then `yyyymm` rows; later blocks repeat the layout.
fn ff_text(names: &[String], rows: &[(u32, Vec<f64>)]) -> String {
    let mut s = String::from("  This file was created using the 202401 CRSP database.\n  Average Value Weighted Returns -- Monthly\n");
    s.push_str("        ");
    for n in names {
        s.push_str(&format!(" {n:>6}"));
    }
    s.push('\n');
    for (d, v) in rows {
        s.push_str(&format!("{d}"));
        for x in v {
            s.push_str(&format!(" {x:>6.2}"));
        }
        s.push('\n');
    }
    s.push_str("\n  Average Equal Weighted Returns -- Monthly\n");
    for (d, v) in rows {
        s.push_str(&format!("{d}"));
        for _ in v {
            s.push_str("   1.00");
        }
        s.push('\n');
    }
    s
}

#[test]
fn forty_eight_column_file() {
    let names: Vec<String> = (0..48).map(|j| format!("Ind{j}")).collect();
    let mut rows = Vec::new();
    let mut month = ym(1970, 1);
    for t in 0..30 {
        rows.push((
            (month.year as u32) * 100 + month.month,
            (0..48).map(|j| ((t * 48 + j) % 17) as f64 * 0.37 - 2.5).collect::<Vec<_>>(),
        ));
        month = month.next();
    }
    let panel = parse_ff_file(ff_text(&names, &rows).as_bytes(), Some(48)).unwrap();
    assert_eq!(panel.n_assets(), 48);
    assert_eq!(panel.n_periods(), 30);
    assert_eq!(panel.asset_names(), names.as_slice());
    assert_eq!(panel.first_month(), ym(1970, 1));
    assert_eq!(panel.last_month(), ym(1972, 6));
    for (t, (_, v)) in rows.iter().enumerate() {
        for (j, x) in v.iter().enumerate() {
            assert!((panel.returns()[(t, j)] - x * 12.0 / 100.0).abs() < 1e-15);
        }
    }
    assert!(matches!(
        parse_ff_file(ff_text(&names, &rows).as_bytes(), Some(49)),
        Err(Error::WrongColumnCount { expected: 49, actual: 48, .. })
    ));
}

#[test]
fn missing_value_rows_are_dropped_and_windows_refuse_the_gap() {
    let text = "x a b\n199001 1.0 2.0\n199002 -99.99 2.0\n199003 3.0 4.0\n";
    let panel = parse_ff_file(text.as_bytes(), Some(2)).unwrap();
    assert_eq!(panel.n_periods(), 2);
    assert_eq!(panel.dates(), &[ym(1990, 1), ym(1990, 3)]);
    assert!(matches!(panel.window(ym(1990, 1), 2), Err(Error::WindowOutOfRange { .. })));
    assert_eq!(panel.window(ym(1990, 3), 1).unwrap().n_periods(), 1);
}

#[test]
fn read_panel_accepts_both_layouts() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let panel = common::synthetic_panel(&mut rng, 4, 15, ym(2000, 11));
    let back = read_panel(&panel.to_canonical_csv(), Some(4)).unwrap();
    assert_eq!(back, panel);
    let ff = read_panel("  a b\n200001 1.2 -0.6\n", None).unwrap();
    assert_eq!(ff.returns().as_slice(), &[1.2 * 12.0 / 100.0, -0.6 * 12.0 / 100.0]);
    assert!(read_panel("date,a\n2000-01,0.1\n", Some(2)).is_err());
}

fn two_pass_covariance(r: &DMatrix<f64>) -> DMatrix<f64> {
    let t = r.nrows() as f64;
    let means: Vec<f64> = r.column_iter().map(|c| c.iter().sum::<f64>() / t).collect();
    let mut centered = r.clone();
    for (j, mut c) in centered.column_iter_mut().enumerate() {
        c.add_scalar_mut(-means[j]);
    }
    centered.transpose() * &centered / t
}

#[test]
fn covariance_matches_the_centered_gram_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (n, t) in [(3, 10), (12, 60), (48, 60), (5, 2)] {
        let panel = common::synthetic_panel(&mut rng, n, t, ym(1980, 1));
        let m = estimate_moments(&panel);
        let oracle = two_pass_covariance(panel.returns());
        let scale = oracle.amax();
        assert!((&m.covariance - &oracle).amax() <= 1e-12 * scale);
        assert_eq!(m.covariance, m.covariance.transpose());
        let min_eig = m.covariance.clone().symmetric_eigenvalues().min();
        assert!(min_eig >= -1e-12 * scale, "n={n} t={t}: {min_eig}");
        assert_eq!(m.window, (panel.first_month(), panel.last_month()));
        for j in 0..n {
            let mean = panel.returns().column(j).iter().sum::<f64>() / t as f64;
            assert!((m.mean[j] - mean).abs() <= 1e-15 * (1.0 + mean.abs()));
        }
    }
}

#[test]
fn constant_columns_have_zero_variance() {
    let r = DMatrix::from_row_slice(3, 2, &[0.25, 0.5, 0.25, -0.5, 0.25, 0.0]);
    let dates = vec![ym(2001, 1), ym(2001, 2), ym(2001, 3)];
    let panel = ReturnPanel::new(r, dates, vec!["a".into(), "b".into()]).unwrap();
    let m = estimate_moments(&panel);
    assert_eq!(m.covariance[(0, 0)], 0.0);
    assert_eq!(m.covariance[(0, 1)], 0.0);
    assert!((m.covariance[(1, 1)] - 0.5 / 3.0).abs() < 1e-15);
}

#[test]
fn select_assets_keeps_names_and_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let panel = common::synthetic_panel(&mut rng, 6, 8, ym(1999, 5));
    let sub = panel.select_assets(&[4, 1]).unwrap();
    assert_eq!(sub.asset_names(), &["Ind4".to_string(), "Ind1".to_string()]);
    assert_eq!(sub.returns().column(0), panel.returns().column(4));
    assert!(panel.select_assets(&[6]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonical_csv_round_trips(seed in 0u64..100_000, n in 1usize..8, t in 1usize..30, y in 1926i32..2030, mo in 1u32..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = common::gaussian_matrix(&mut rng, t, n);
        r[(0, 0)] *= 1e-200;
        let start = ym(y, mo);
        let dates = (0..t).map(|k| start.add_months(k as i64)).collect();
        let names = (0..n).map(|j| format!("col_{j}")).collect();
        let panel = ReturnPanel::new(r, dates, names).unwrap();
        let back = ReturnPanel::from_canonical_csv(&panel.to_canonical_csv()).unwrap();
        prop_assert_eq!(back, panel);
    }

    #[test]
    fn month_arithmetic_is_consistent(y in 1900i32..2100, mo in 1u32..=12, k in -2000i64..2000) {
        let a = ym(y, mo);
        let b = a.add_months(k);
        prop_assert_eq!(a.months_until(b), k);
        prop_assert_eq!(b.add_months(-k), a);
        prop_assert_eq!(b.to_string().parse::<YearMonth>().unwrap(), b);
    }
}
