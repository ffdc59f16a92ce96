mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use sparsefolio::market_data::YearMonth;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparsefolio"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const IDENTITY: &str = r#"{"design": [[1, 0], [0, 1]], "target": [3, 1]}"#;

#[test]
fn solve_prints_the_soft_thresholding_path() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "p.json", IDENTITY);
    let o = run(&["solve", s(&input)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let taus: Vec<f64> = v["breakpoints"].as_array().unwrap().iter().map(|b| b["tau"].as_f64().unwrap()).collect();
    assert_eq!(taus, vec![6.0, 2.0, 0.0]);
    assert_eq!(v["breakpoints"][1]["weights"], serde_json::json!([2.0, 0.0]));
    assert_eq!(v["n_assets"], 2);
}

#[test]
fn solve_output_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let input = write(
        dir.path(),
        "p.json",
        r#"{"design": [[0.3, -1.2, 0.5], [1.1, 0.4, -0.7], [0.2, 0.9, 1.3], [-0.6, 0.1, 0.8]],
            "target": [1.0, -0.5, 0.25, 2.0],
            "constraints": {"matrix": [[1, 1, 1]], "rhs": [1]}}"#,
    );
    let a = run(&["solve", s(&input)]);
    let b = run(&["solve", s(&input)]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let csv1 = run(&["solve", s(&input), "--format", "csv"]);
    let csv2 = run(&["solve", s(&input), "--format", "csv"]);
    assert_eq!(csv1.stdout, csv2.stdout);
    assert!(stdout(&csv1).starts_with("tau,events,active_count,w0,w1,w2\n"));
}

#[test]
fn empty_constraints_match_the_unconstrained_solver() {
    let dir = TempDir::new().unwrap();
    let plain = write(dir.path(), "a.json", IDENTITY);
    let empty = write(
        dir.path(),
        "b.json",
        r#"{"design": [[1, 0], [0, 1]], "target": [3, 1], "constraints": {"matrix": [], "rhs": []}}"#,
    );
    let a = run(&["solve", s(&plain)]);
    let b = run(&["solve", s(&empty)]);
    assert_eq!(b.status.code(), Some(0), "{}", stderr(&b));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn solver_and_input_errors_have_distinct_codes() {
    let dir = TempDir::new().unwrap();
    let infeasible = write(
        dir.path(),
        "inf.json",
        r#"{"design": [[1, 0], [0, 1]], "target": [1, 1],
            "constraints": {"matrix": [[1, 1], [1, 1]], "rhs": [1, 2]}}"#,
    );
    let o = run(&["solve", s(&infeasible)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("InfeasibleConstraints"), "{}", stderr(&o));

    let malformed = write(dir.path(), "bad.json", r#"{"design": [[1, 0], [0]], "target": [1, 1]}"#);
    let o = run(&["solve", s(&malformed)]);
    assert_eq!(o.status.code(), Some(2));

    let not_json = write(dir.path(), "x.json", "design = 1");
    let o = run(&["solve", s(&not_json)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ParseError"));

    let unknown = write(dir.path(), "u.json", r#"{"design": [[1]], "target": [1], "extra": 0}"#);
    assert_eq!(run(&["solve", s(&unknown)]).status.code(), Some(2));

    let o = run(&["solve", s(&dir.path().join("missing.json"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("IoError"));

    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn out_directory_receives_path_and_frontier() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "p.json", IDENTITY);
    let out = dir.path().join("res");
    let o = run(&["solve", s(&input), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("3 breakpoints"));
    let path: Value = serde_json::from_str(&fs::read_to_string(out.join("path.json")).unwrap()).unwrap();
    assert_eq!(path["breakpoints"].as_array().unwrap().len(), 3);
    let frontier = fs::read_to_string(out.join("frontier.csv")).unwrap();
    let lines: Vec<&str> = frontier.lines().collect();
    assert_eq!(lines[0], "tau,residual_sq,weighted_l1,active_count");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].ends_with(",2"));
}

/// Monthly percent returns in the published industry-file layout.
fn ff_file(dir: &Path, n: usize) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let panel = common::synthetic_panel(&mut rng, n, 420, YearMonth::new(1971, 7).unwrap());
    let mut text = String::from("  Synthetic industry portfolios\n  Average Value Weighted Returns -- Monthly\n       ");
    for name in panel.asset_names() {
        text.push_str(&format!(" {name:>6}"));
    }
    text.push('\n');
    for (t, d) in panel.dates().iter().enumerate() {
        text.push_str(&format!("{}{:02}", d.year, d.month));
        for j in 0..n {
            text.push_str(&format!(" {:>6.2}", panel.returns()[(t, j)] * 100.0 / 12.0));
        }
        text.push('\n');
    }
    write(dir, "ff.txt", &text)
}

fn last_line(o: &Output) -> String {
    stdout(o).lines().last().unwrap().to_string()
}

#[test]
fn backtest_reports_the_full_period() {
    let dir = TempDir::new().unwrap();
    let data = ff_file(dir.path(), 8);
    let out = dir.path().join("bt");
    let o = run(&["backtest", s(&data), "--paper-mode", "--out", s(&out), "--expected-assets", "8"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("30 construction years, 0 failed\n"), "{text}");
    let last = last_line(&o);
    let fields: Vec<&str> = last.split_whitespace().collect();
    assert_eq!(fields[0], "no-short");
    assert_eq!(fields.len(), 5);
    for f in &fields[2..] {
        assert!(f.parse::<i64>().is_ok(), "{last}");
    }
    let table = fs::read_to_string(out.join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 8);
    let counts = fs::read_to_string(out.join("active_counts.csv")).unwrap();
    assert_eq!(counts.lines().count(), 31);
    let monthly = fs::read_to_string(out.join("monthly_returns.csv")).unwrap();
    assert_eq!(monthly.lines().count(), 361);
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["years"].as_array().unwrap().len(), 30);
    assert_eq!(report["failures"], 0);

    let wrong = run(&["backtest", s(&data), "--expected-assets", "9"]);
    assert_eq!(wrong.status.code(), Some(2));
    assert!(stderr(&wrong).contains("WrongColumnCount"));
}

#[test]
fn backtest_single_year_and_bin_policy() {
    let dir = TempDir::new().unwrap();
    let data = ff_file(dir.path(), 8);
    let o = run(&["backtest", s(&data), "--start", "1990-06", "--end", "1991-06"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("1 construction years, 0 failed\n"));
    assert!(last_line(&o).starts_with("no-short 07/90-06/91 "), "{}", last_line(&o));

    let o = run(&["backtest", s(&data), "--policy", "bin", "--bin", "2,4", "--start", "1990-06", "--end", "1995-06"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(last_line(&o).starts_with("bin-2-4 07/90-06/95 "));

    let o = run(&["backtest", s(&data), "--policy", "exact-k"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["backtest", s(&data), "--policy", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn backtest_config_file_with_flag_override() {
    let dir = TempDir::new().unwrap();
    let data = ff_file(dir.path(), 6);
    let out = dir.path().join("cfg_out");
    let cfg = write(
        dir.path(),
        "bt.toml",
        &format!(
            "data = {:?}\npolicy = \"exact-k\"\nk = 3\nstart = \"1980-06\"\nend = \"1985-06\"\nsharpe_k = [2, 4]\nout = {:?}\n",
            s(&data),
            s(&out)
        ),
    );
    let o = run(&["backtest", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("5 construction years"));
    assert!(last_line(&o).starts_with("exact-3 07/80-06/85 "), "{}", last_line(&o));
    let sk = fs::read_to_string(out.join("sharpe_vs_k.csv")).unwrap();
    assert_eq!(sk.lines().count(), 4);

    let o = run(&["backtest", "--config", s(&cfg), "--policy", "no-short", "--end", "1981-06"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("1 construction years"));
    assert!(last_line(&o).starts_with("no-short "));

    let bad = write(dir.path(), "bad.toml", "polcy = \"no-short\"\n");
    let o = run(&["backtest", s(&data), "--config", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ParseError"));
}

#[test]
fn track_hedge_and_adjust() {
    let dir = TempDir::new().unwrap();
    let track = write(
        dir.path(),
        "t.json",
        r#"{"index_returns": [0.1, -0.2, 0.3, 0.05],
            "returns": [[0.1, 0.0], [-0.2, 0.1], [0.3, -0.1], [0.05, 0.2]]}"#,
    );
    let out = dir.path().join("track");
    let o = run(&["track", s(&track), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let frontier = fs::read_to_string(out.join("frontier.csv")).unwrap();
    assert!(frontier.starts_with("tau,tracking_error,weighted_l1,active_count\n"));
    // The index is the first column, so the path ends holding exactly it.
    let path: Value = serde_json::from_str(&fs::read_to_string(out.join("path.json")).unwrap()).unwrap();
    let last = path["breakpoints"].as_array().unwrap().last().unwrap().clone();
    assert!((last["weights"][0].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(last["weights"][1].as_f64().unwrap(), 0.0);

    let hedge = write(
        dir.path(),
        "h.json",
        r#"{"pnl_existing": [0, 0, 0], "pnl_unit": [[1, 2], [-1, 0], [0.5, 1]], "probabilities": [0.2, 0.3, 0.5]}"#,
    );
    let out = dir.path().join("hedge");
    let o = run(&["hedge", s(&hedge), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let frontier = fs::read_to_string(out.join("frontier.csv")).unwrap();
    let rows: Vec<&str> = frontier.lines().collect();
    assert_eq!(rows.len(), 2);
    let cells: Vec<f64> = rows[1].split(',').take(3).map(|x| x.parse().unwrap()).collect();
    assert_eq!(cells, vec![0.0, 0.0, 0.0]);

    let bad_p = write(
        dir.path(),
        "hp.json",
        r#"{"pnl_existing": [1, 0], "pnl_unit": [[1], [2]], "probabilities": [0.5, 0.6]}"#,
    );
    assert_eq!(run(&["hedge", s(&bad_p)]).status.code(), Some(2));

    let adjust = write(
        dir.path(),
        "a.json",
        r#"{"current": [0.25, 0.25, 0.25, 0.25],
            "returns": [[0.1, 0.2, -0.1, 0.05], [0.0, -0.1, 0.2, 0.1], [0.3, 0.1, 0.0, -0.2],
                        [-0.1, 0.15, 0.1, 0.0], [0.2, 0.0, -0.05, 0.1], [0.05, 0.1, 0.15, 0.2]]}"#,
    );
    let o = run(&["adjust", s(&adjust)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let start = &v["breakpoints"][0]["weights"];
    assert!(start.as_array().unwrap().iter().all(|x| x.as_f64() == Some(0.0)));
    for bp in v["breakpoints"].as_array().unwrap() {
        let trade: f64 = bp["weights"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
        assert!(trade.abs() < 1e-10);
    }

    let unbalanced = write(
        dir.path(),
        "ab.json",
        r#"{"current": [0.5, 0.25], "returns": [[0.1, 0.2], [0.0, -0.1], [0.3, 0.1]]}"#,
    );
    let o = run(&["adjust", s(&unbalanced)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("CurrentPortfolioInvalid"));
}
