//! End-to-end pipeline on a synthetic regime-switching sector panel:
//! simulate, estimate scaling, optimise and backtest the standard suite.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::backtest::{compare, BacktestConfig, Comparison};
use crate::covariance::{default_ridge, multiscale_cov, CovMethod, ScaledCovarianceSet};
use crate::error::{Error, Result};
use crate::optimizer::{min_variance_long_only, PortfolioWeights};
use crate::scaling::{estimate_correlation_scaling, estimate_hurst, HurstEstimate};
use crate::synth::{gen_regime_panel, RegimePanelSpec};
use crate::timeseries::{Aggregation, ReturnPanel};

pub const DEFAULT_SEED: u64 = 7;

/// Five assets over five years of trading days with two high-volatility
/// episodes.
pub fn default_fixture() -> RegimePanelSpec {
    RegimePanelSpec {
        n: 1260,
        sigma_low: vec![0.008, 0.010, 0.012, 0.014, 0.016],
        sigma_high: vec![0.024, 0.022, 0.036, 0.028, 0.040],
        correlation: 0.4,
        switch_points: vec![300, 420, 880, 1000],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetScaling {
    pub asset_id: String,
    pub hurst: HurstEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproSummary {
    pub seed: u64,
    pub fixture: RegimePanelSpec,
    pub scales: Vec<usize>,
    pub hurst: Vec<AssetScaling>,
    /// Correlation-scaling exponent of the first two assets.
    pub h_rho_first_pair: f64,
    pub daily_weights: PortfolioWeights,
    pub multiscale_weights: PortfolioWeights,
    pub backtest_config: BacktestConfig,
    pub comparison: Comparison,
    pub all_metrics_finite: bool,
    /// Whether the multiscale row's max drawdown is no deeper than the
    /// traditional row's; `None` if either row failed.
    pub multiscale_drawdown_not_worse: Option<bool>,
}

impl ReproSummary {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "seed {}  days {}  assets {}",
            self.seed,
            self.fixture.n,
            self.hurst.len()
        );
        for a in &self.hurst {
            let _ = writeln!(
                out,
                "H({}) = {:.3} +/- {:.3}",
                a.asset_id, a.hurst.hurst, a.hurst.stderr
            );
        }
        let _ = writeln!(out, "H_rho(A1, A2) = {:.3}", self.h_rho_first_pair);
        let fmt = |w: &PortfolioWeights| {
            w.weights
                .iter()
                .map(|v| format!("{v:.3}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(out, "daily weights      {}", fmt(&self.daily_weights));
        let _ = writeln!(out, "multiscale weights {}", fmt(&self.multiscale_weights));
        out.push('\n');
        out.push_str(&self.comparison.to_text());
        out.push('\n');
        let _ = writeln!(out, "all metrics finite: {}", self.all_metrics_finite);
        let dd = match self.multiscale_drawdown_not_worse {
            Some(true) => "yes",
            Some(false) => "no",
            None => "n/a",
        };
        let _ = writeln!(out, "multiscale max drawdown <= traditional: {dd}");
        out
    }
}

fn full_sample_weights(panel: &ReturnPanel, scales: &[usize]) -> Result<PortfolioWeights> {
    let set = ScaledCovarianceSet::estimate(panel, scales, CovMethod::Product, Aggregation::NonOverlapping)?;
    let ridge = default_ridge(&multiscale_cov(&set, 0.0)?.matrix);
    min_variance_long_only(&multiscale_cov(&set, ridge)?)
}

/// Run the pipeline on an already simulated panel.
pub fn run_on_panel(
    panel: &ReturnPanel,
    seed: u64,
    fixture: RegimePanelSpec,
    cfg: &BacktestConfig,
) -> Result<ReproSummary> {
    let scales = cfg.scales.clone();
    let hurst = panel
        .asset_ids
        .iter()
        .map(|id| {
            Ok(AssetScaling {
                asset_id: id.clone(),
                hurst: estimate_hurst(panel, id, &scales)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if panel.n_assets() < 2 {
        return Err(Error::InvalidParameter("pipeline needs at least two assets".into()));
    }
    let pair = estimate_correlation_scaling(panel, &panel.asset_ids[0], &panel.asset_ids[1], &scales)?;
    let daily_weights = full_sample_weights(panel, &[1])?;
    let multiscale_weights = full_sample_weights(panel, &scales)?;

    let comparison = compare(panel, &BacktestConfig::standard_suite(cfg));
    let all_metrics_finite = comparison.rows.iter().all(|r| {
        r.report.as_ref().is_some_and(|rep| {
            let m = &rep.metrics;
            m.sharpe.is_finite()
                && m.sortino.is_some_and(f64::is_finite)
                && m.max_drawdown.is_finite()
                && m.excess_kurtosis.is_finite()
        })
    });
    let drawdown = |label: &str| {
        comparison
            .rows
            .iter()
            .find(|r| r.strategy == label)
            .and_then(|r| r.report.as_ref())
            .map(|rep| rep.metrics.max_drawdown)
    };
    let multiscale_drawdown_not_worse = match (drawdown("Multiscale Markowitz"), drawdown("Traditional Markowitz")) {
        (Some(m), Some(t)) => Some(m >= t),
        _ => None,
    };
    Ok(ReproSummary {
        seed,
        fixture,
        scales,
        hurst,
        h_rho_first_pair: pair.h_rho.exponent,
        daily_weights,
        multiscale_weights,
        backtest_config: cfg.clone(),
        comparison,
        all_metrics_finite,
        multiscale_drawdown_not_worse,
    })
}

/// Simulate the default fixture with `seed` and run the full pipeline.
pub fn run_repro(seed: u64) -> Result<(ReturnPanel, ReproSummary)> {
    let fixture = default_fixture();
    let panel = gen_regime_panel(&fixture, seed)?;
    let summary = run_on_panel(&panel, seed, fixture, &BacktestConfig::default())?;
    Ok((panel, summary))
}
