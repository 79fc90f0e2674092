use std::path::Path;
use std::process::{Command, Output};

use clap::CommandFactory;
use multiscale_cli::{Cli, OUT_DIR_ENV};
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_multiscale"));
    c.env_remove(OUT_DIR_ENV);
    c
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run_in(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn regime_fixture(dir: &Path) {
    ok(
        dir,
        &[
            "simulate",
            "--kind",
            "regime",
            "--n",
            "1260",
            "--sigma-low",
            "0.008,0.01,0.012",
            "--sigma-high",
            "0.024,0.022,0.036",
            "--correlation",
            "0.4",
            "--switch-points",
            "300,420,880,1000",
            "--seed",
            "11",
            "--out",
            "regime.csv",
        ],
    );
}

#[test]
fn help_documents_every_flag() {
    let cmd = Cli::command();
    for sub in cmd.get_subcommands() {
        let name = sub.get_name();
        let out = ok(Path::new("."), &[name, "--help"]);
        let help = String::from_utf8(out.stdout).unwrap();
        for arg in sub.get_arguments() {
            let Some(long) = arg.get_long() else { continue };
            assert!(
                help.contains(&format!("--{long}")),
                "`{name} --help` does not mention --{long}"
            );
            assert!(
                arg.get_help().is_some_and(|h| !h.to_string().trim().is_empty()),
                "`{name} --{long}` has no description"
            );
        }
    }
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &[
            "simulate", "--kind", "gaussian", "--n", "16", "--seed", "1", "--out", "a.csv",
        ],
    );
    ok(
        dir.path(),
        &[
            "simulate", "--kind", "gaussian", "--n", "16", "--seed", "1", "--out", "b.csv",
        ],
    );
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
    ok(
        dir.path(),
        &[
            "simulate", "--kind", "gaussian", "--n", "16", "--seed", "2", "--out", "c.csv",
        ],
    );
    assert_ne!(a, std::fs::read(dir.path().join("c.csv")).unwrap());
}

#[test]
fn fgn_writes_one_more_price_than_returns() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &[
            "simulate", "--kind", "fgn", "--hurst", "0.7", "--n", "16384", "--seed", "42", "--out", "fgn.csv",
        ],
    );
    let text = std::fs::read_to_string(dir.path().join("fgn.csv")).unwrap();
    assert_eq!(text.lines().count() - 1, 16385);
}

#[test]
fn bad_kind_is_a_usage_error() {
    let out = run_in(Path::new("."), &["simulate", "--kind", "bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid value"));
    assert!(out.stdout.is_empty());
}

#[test]
fn short_gaussian_panel_is_rejected() {
    let out = run_in(
        Path::new("."),
        &["simulate", "--kind", "gaussian", "--n", "8", "--seed", "1"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn estimate_recovers_hurst_of_fgn() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &[
            "simulate", "--kind", "fgn", "--hurst", "0.7", "--n", "8192", "--seed", "5", "--out", "f.csv",
        ],
    );
    ok(dir.path(), &["estimate", "--input", "f.csv"]);
    let r = json(&dir.path().join("scaling.json"));
    let spec = &r["assets"][0]["spectrum"];
    let q: Vec<f64> = serde_json::from_value(spec["q_grid"].clone()).unwrap();
    let h: Vec<f64> = serde_json::from_value(spec["h_of_q"].clone()).unwrap();
    let h2 = h[q.iter().position(|&v| v == 2.0).unwrap()];
    assert!((h2 - 0.7).abs() < 0.05, "h(2) = {h2}");
    assert!(dir.path().join("covariance.csv").exists());
}

#[test]
fn estimate_pairs_on_epps_fixture() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &[
            "simulate", "--kind", "epps", "--n", "20000", "--seed", "9", "--out", "e.csv",
        ],
    );
    ok(dir.path(), &["estimate", "--input", "e.csv", "--pairs"]);
    let r = json(&dir.path().join("scaling.json"));
    let h_rho = r["pairs"][0]["h_rho"]["exponent"].as_f64().unwrap();
    assert!((h_rho - 0.3).abs() < 0.1, "H_rho = {h_rho}");
}

#[test]
fn estimate_iid_spectrum_is_flat() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &[
            "simulate", "--kind", "gaussian", "--n", "16384", "--seed", "4", "--out", "g.csv",
        ],
    );
    ok(dir.path(), &["estimate", "--input", "g.csv", "--method", "mfdfa"]);
    let r = json(&dir.path().join("scaling.json"));
    let h: Vec<f64> = serde_json::from_value(r["assets"][0]["spectrum"]["h_of_q"].clone()).unwrap();
    let spread = h.iter().cloned().fold(f64::MIN, f64::max) - h.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 0.1, "spread {spread}");
}

/// Two assets whose daily returns are orthogonal with equal norm, so the
/// sample covariance is a multiple of the identity.
fn identity_fixture(path: &Path) {
    let mut text = String::from("date,A,B\n");
    let (mut a, mut b) = (100.0f64, 100.0f64);
    let start = fixture_date(0);
    text.push_str(&format!("{start},{a},{b}\n"));
    for t in 0..64 {
        let ra = if t % 2 == 0 { 0.01 } else { -0.01 };
        let rb = if t % 4 < 2 { 0.01 } else { -0.01 };
        a *= f64::exp(ra);
        b *= f64::exp(rb);
        text.push_str(&format!("{},{a},{b}\n", fixture_date(t + 1)));
    }
    std::fs::write(path, text).unwrap();
}

fn fixture_date(i: usize) -> String {
    format!("2020-{:02}-{:02}", 1 + i / 28, 1 + i % 28)
}

#[test]
fn optimize_identity_gives_equal_weights() {
    let dir = TempDir::new().unwrap();
    identity_fixture(&dir.path().join("id.csv"));
    ok(dir.path(), &["optimize", "--input", "id.csv", "--scales", "1"]);
    let r = json(&dir.path().join("optimize.json"));
    let w: Vec<f64> = serde_json::from_value(r["weights"]["weights"].clone()).unwrap();
    assert!((w[0] - 0.5).abs() < 1e-9 && (w[1] - 0.5).abs() < 1e-9, "{w:?}");
    let csv = std::fs::read_to_string(dir.path().join("weights.csv")).unwrap();
    assert!(csv.starts_with("asset_id,weight\n"));
}

#[test]
fn optimize_daily_and_multiscale_agree_on_brownian_data() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &[
            "simulate",
            "--kind",
            "correlated",
            "--cov-matrix",
            "1e-4,3e-5;3e-5,2.25e-4",
            "--n",
            "20000",
            "--seed",
            "8",
            "--out",
            "c.csv",
        ],
    );
    ok(
        dir.path(),
        &["optimize", "--input", "c.csv", "--scales", "1", "--report", "d.json"],
    );
    ok(
        dir.path(),
        &[
            "optimize",
            "--input",
            "c.csv",
            "--scales",
            "1,2,5,10,21",
            "--report",
            "m.json",
        ],
    );
    let d: Vec<f64> = serde_json::from_value(json(&dir.path().join("d.json"))["weights"]["weights"].clone()).unwrap();
    let m: Vec<f64> = serde_json::from_value(json(&dir.path().join("m.json"))["weights"]["weights"].clone()).unwrap();
    assert!((d[0] - m[0]).abs() < 0.05, "{d:?} vs {m:?}");
}

#[test]
fn infeasible_return_floor_exits_nonzero() {
    let dir = TempDir::new().unwrap();
    identity_fixture(&dir.path().join("id.csv"));
    let out = run_in(
        dir.path(),
        &["optimize", "--input", "id.csv", "--scales", "1", "--mu-target", "0.5"],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible"));
}

#[test]
fn backtest_reports_four_rows_and_echoes_config() {
    let dir = TempDir::new().unwrap();
    regime_fixture(dir.path());
    let out = ok(dir.path(), &["backtest", "--input", "regime.csv"]);
    let table = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = table.lines().filter(|l| !l.trim().is_empty()).collect();
    assert_eq!(lines.len(), 5, "{table}");
    assert!(
        lines[0].contains("Sharpe Ratio") && lines[0].contains("Sortino Ratio") && lines[0].contains("Max Drawdown")
    );
    let r = json(&dir.path().join("backtest.json"));
    assert_eq!(r["config"]["lookback"], 125);
    assert_eq!(r["config"]["rebalance"], 21);
    assert_eq!(r["comparison"]["rows"].as_array().unwrap().len(), 4);
    for f in ["metrics.csv", "equity.csv", "weights.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn backtest_on_short_panel_fails() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &[
            "simulate", "--kind", "gaussian", "--n", "100", "--seed", "1", "--out", "g.csv",
        ],
    );
    let out = run_in(dir.path(), &["backtest", "--input", "g.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("too short"));
    assert!(!dir.path().join("backtest.json").exists());
}

#[test]
fn config_file_is_applied_and_flags_win() {
    let dir = TempDir::new().unwrap();
    regime_fixture(dir.path());
    std::fs::write(
        dir.path().join("bt.cfg"),
        "# backtest settings\nlookback = 300\nrebalance = 42\nstrategy = equal-weight\n",
    )
    .unwrap();
    ok(
        dir.path(),
        &[
            "backtest",
            "--input",
            "regime.csv",
            "--config",
            "bt.cfg",
            "--lookback",
            "250",
        ],
    );
    let r = json(&dir.path().join("backtest.json"));
    assert_eq!(r["config"]["lookback"], 250);
    assert_eq!(r["config"]["rebalance"], 42);
    assert_eq!(r["comparison"]["rows"].as_array().unwrap().len(), 1);

    std::fs::write(dir.path().join("bad.cfg"), "rebalanse = 42\n").unwrap();
    let out = run_in(
        dir.path(),
        &["backtest", "--input", "regime.csv", "--config", "bad.cfg"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));
}

#[test]
fn output_directory_from_environment() {
    let dir = TempDir::new().unwrap();
    let out = bin()
        .current_dir(dir.path())
        .env(OUT_DIR_ENV, "results")
        .args(["simulate", "--kind", "gaussian", "--n", "32"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("results/prices.csv").exists());
    ok(
        dir.path(),
        &["simulate", "--kind", "gaussian", "--n", "32", "--out-dir", "flag"],
    );
    assert!(dir.path().join("flag/prices.csv").exists());
}

#[test]
fn repro_is_bit_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = ok(dir.path(), &["repro", "--out-dir", "a"]);
    let b = ok(dir.path(), &["repro", "--out-dir", "b"]);
    assert_eq!(a.stdout, b.stdout);
    for f in ["repro.json", "repro.txt", "repro_prices.csv"] {
        let x = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.contains("Multiscale Markowitz (Overlapping)"));
}
