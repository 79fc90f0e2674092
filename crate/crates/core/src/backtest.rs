//! Walk-forward backtests of equal-weight, single-scale and multiscale
//! allocation strategies.
//!
//! At each rebalance row `t` the strategy sees only rows `[t − lookback, t)`;
//! the resulting weights are held (buy and hold, no transaction costs) over
//! rows `[t, t + rebalance_every)`.

use std::fmt::Write as _;
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::covariance::{default_ridge, multiscale_cov, CovMethod, MultiscaleCovariance, ScaledCovarianceSet};
use crate::error::{Error, Result};
use crate::optimizer::{max_sharpe, min_variance_long_only, PortfolioWeights};
use crate::scaling::DEFAULT_SCALES;
use crate::timeseries::{ensure_estimable, Aggregation, ReturnPanel};

pub const TRADING_DAYS_PER_YEAR: usize = 252;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    EqualWeight,
    /// Long-only minimum variance on the daily covariance.
    MarkowitzDaily,
    /// Long-only minimum variance on Σ^MS over the configured scales.
    MarkowitzMultiscale,
    /// Long-only tangency portfolio on the daily covariance.
    MaxSharpeDaily,
    /// Long-only tangency portfolio on Σ^MS.
    MaxSharpeMultiscale,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "equal_weight" | "equal" => Ok(Strategy::EqualWeight),
            "markowitz_daily" | "daily" => Ok(Strategy::MarkowitzDaily),
            "markowitz_multiscale" | "multiscale" => Ok(Strategy::MarkowitzMultiscale),
            "max_sharpe_daily" => Ok(Strategy::MaxSharpeDaily),
            "max_sharpe_multiscale" => Ok(Strategy::MaxSharpeMultiscale),
            other => Err(Error::InvalidParameter(format!("unknown strategy `{other}`"))),
        }
    }
}

impl Strategy {
    fn uses_scales(self) -> bool {
        matches!(self, Strategy::MarkowitzMultiscale | Strategy::MaxSharpeMultiscale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub strategy: Strategy,
    /// Estimation window in trading days.
    pub lookback: usize,
    pub rebalance_every: usize,
    pub scales: Vec<usize>,
    pub covariance_method: CovMethod,
    pub aggregation: Aggregation,
    /// Per-day risk-free rate for the tangency strategies.
    pub risk_free: f64,
    /// Ridge added to the aggregated covariance; `None` uses `1e-8·trace/N`.
    pub ridge: Option<f64>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::MarkowitzMultiscale,
            lookback: 125,
            rebalance_every: 21,
            scales: DEFAULT_SCALES.to_vec(),
            covariance_method: CovMethod::Product,
            aggregation: Aggregation::NonOverlapping,
            risk_free: 0.0,
            ridge: None,
        }
    }
}

impl BacktestConfig {
    pub fn with_strategy(strategy: Strategy) -> Self {
        Self {
            strategy,
            ..Self::default()
        }
    }

    /// The four rows of the standard comparison table, in table order.
    pub fn standard_suite(base: &BacktestConfig) -> Vec<BacktestConfig> {
        let mut overlapping = BacktestConfig {
            strategy: Strategy::MarkowitzMultiscale,
            ..base.clone()
        };
        overlapping.aggregation = Aggregation::Overlapping;
        vec![
            BacktestConfig {
                strategy: Strategy::EqualWeight,
                ..base.clone()
            },
            BacktestConfig {
                strategy: Strategy::MarkowitzDaily,
                ..base.clone()
            },
            BacktestConfig {
                strategy: Strategy::MarkowitzMultiscale,
                aggregation: Aggregation::NonOverlapping,
                ..base.clone()
            },
            overlapping,
        ]
    }

    /// Row label used in comparison tables.
    pub fn label(&self) -> String {
        let mut s = match (self.strategy, self.aggregation) {
            (Strategy::EqualWeight, _) => "Equally Weighted".to_string(),
            (Strategy::MarkowitzDaily, _) => "Traditional Markowitz".to_string(),
            (Strategy::MarkowitzMultiscale, Aggregation::NonOverlapping) => "Multiscale Markowitz".to_string(),
            (Strategy::MarkowitzMultiscale, Aggregation::Overlapping) => {
                "Multiscale Markowitz (Overlapping)".to_string()
            }
            (Strategy::MaxSharpeDaily, _) => "Max Sharpe".to_string(),
            (Strategy::MaxSharpeMultiscale, Aggregation::NonOverlapping) => "Multiscale Max Sharpe".to_string(),
            (Strategy::MaxSharpeMultiscale, Aggregation::Overlapping) => {
                "Multiscale Max Sharpe (Overlapping)".to_string()
            }
        };
        if self.strategy != Strategy::EqualWeight && self.covariance_method != CovMethod::Product {
            let tag = match self.covariance_method {
                CovMethod::L1 => "L1",
                _ => "L1 joint",
            };
            let _ = write!(s, " [{tag}]");
        }
        s
    }

    fn effective_scales(&self) -> Vec<usize> {
        if self.strategy.uses_scales() {
            self.scales.clone()
        } else {
            vec![1]
        }
    }

    /// Check the schedule against itself and, if given, a panel length.
    pub fn validate(&self, panel_len: Option<usize>) -> Result<()> {
        if self.rebalance_every == 0 {
            return Err(Error::BadSchedule("rebalance_every must be at least 1".into()));
        }
        if self.strategy.uses_scales() && self.scales.is_empty() {
            return Err(Error::BadSchedule("empty scale list".into()));
        }
        if let Some(&max) = self.scales.iter().max() {
            if self.strategy.uses_scales() && self.lookback < 4 * max {
                return Err(Error::BadSchedule(format!(
                    "lookback {} is shorter than 4 x largest scale {max}",
                    self.lookback
                )));
            }
        }
        if self.strategy != Strategy::EqualWeight {
            for dt in self.effective_scales() {
                ensure_estimable(self.lookback, dt, self.aggregation)
                    .map_err(|e| Error::BadSchedule(format!("lookback {}: {e}", self.lookback)))?;
            }
        }
        if !self.risk_free.is_finite() {
            return Err(Error::BadSchedule("risk-free rate must be finite".into()));
        }
        if let Some(len) = panel_len {
            if len <= self.lookback + self.rebalance_every {
                return Err(Error::PanelTooShort {
                    len,
                    lookback: self.lookback,
                    rebalance: self.rebalance_every,
                });
            }
        }
        Ok(())
    }
}

/// The covariance a strategy optimises on for one estimation window.
pub fn estimate_covariance(window: &ReturnPanel, cfg: &BacktestConfig) -> Result<MultiscaleCovariance> {
    let scales = cfg.effective_scales();
    let set = ScaledCovarianceSet::estimate(window, &scales, cfg.covariance_method, cfg.aggregation)?;
    let ridge = match cfg.ridge {
        Some(r) => r,
        None => default_ridge(&multiscale_cov(&set, 0.0)?.matrix),
    };
    multiscale_cov(&set, ridge)
}

/// Weights the strategy would hold after seeing `window`.
pub fn estimate_weights(window: &ReturnPanel, cfg: &BacktestConfig) -> Result<PortfolioWeights> {
    match cfg.strategy {
        Strategy::EqualWeight => Ok(PortfolioWeights::equal(window.asset_ids.clone())),
        Strategy::MarkowitzDaily | Strategy::MarkowitzMultiscale => {
            min_variance_long_only(&estimate_covariance(window, cfg)?)
        }
        Strategy::MaxSharpeDaily | Strategy::MaxSharpeMultiscale => {
            let sigma = estimate_covariance(window, cfg)?;
            max_sharpe(&sigma, &window.mean_returns(), cfg.risk_free, true)
        }
    }
}

/// Rows at which the portfolio is rebalanced.
pub fn rebalance_rows(len: usize, cfg: &BacktestConfig) -> Vec<usize> {
    (cfg.lookback..len).step_by(cfg.rebalance_every.max(1)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rebalance {
    /// Row of the first day the weights are applied to.
    pub row: usize,
    pub date: NaiveDate,
    pub weights: Vec<f64>,
    /// Σ|w_new − w_drifted|; the first allocation counts from cash.
    pub turnover: f64,
    /// Estimation error that forced the previous weights to be kept.
    pub fallback: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Annualised mean / std of daily log returns.
    pub sharpe: f64,
    /// Annualised mean / downside deviation (MAR 0); `None` without losses.
    pub sortino: Option<f64>,
    /// Worst peak-to-trough fraction, in [−1, 0].
    pub max_drawdown: f64,
    pub excess_kurtosis: f64,
}

/// Performance statistics of an equity curve.
pub fn metrics(equity: &[f64], periods_per_year: usize) -> Result<Metrics> {
    if equity.len() < 3 {
        return Err(Error::TooShort {
            needed: 3,
            got: equity.len(),
        });
    }
    if let Some(v) = equity.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("equity value {v} is not positive")));
    }
    let r: Vec<f64> = equity.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let m2 = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = (m2 * n / (n - 1.0)).sqrt();
    let scale_ref = r.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if !(std > 1e-9 * scale_ref) || std == 0.0 {
        return Err(Error::ZeroVolatility);
    }
    let ann = (periods_per_year as f64).sqrt();
    let downside = (r.iter().map(|x| x.min(0.0).powi(2)).sum::<f64>() / n).sqrt();
    let m4 = r.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    Ok(Metrics {
        sharpe: mean / std * ann,
        sortino: (downside > 0.0).then(|| mean / downside * ann),
        max_drawdown: max_drawdown(equity),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
    })
}

/// min_t (equity_t / max_{s≤t} equity_s − 1).
pub fn max_drawdown(equity: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for &v in equity {
        peak = peak.max(v);
        worst = worst.min(v / peak - 1.0);
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub strategy: String,
    pub config: BacktestConfig,
    pub asset_ids: Vec<String>,
    /// Date of each equity point; the first is the last estimation day.
    pub dates: Vec<NaiveDate>,
    pub equity_curve: Vec<f64>,
    pub metrics: Metrics,
    pub rebalances: Vec<Rebalance>,
}

impl BacktestReport {
    pub fn fallbacks(&self) -> usize {
        self.rebalances.iter().filter(|r| r.fallback.is_some()).count()
    }

    pub fn weight_history(&self) -> Vec<Vec<f64>> {
        self.rebalances.iter().map(|r| r.weights.clone()).collect()
    }
}

pub fn run_backtest(base: &ReturnPanel, cfg: &BacktestConfig) -> Result<BacktestReport> {
    cfg.validate(Some(base.len()))?;
    let n = base.n_assets();
    let len = base.len();
    let mut equity = vec![1.0];
    let start_date = if cfg.lookback > 0 {
        base.timestamps[cfg.lookback - 1]
    } else {
        base.timestamps[0]
    };
    let mut dates = vec![start_date];
    let mut holdings = vec![0.0; n];
    let mut current: Option<Vec<f64>> = None;
    let mut rebalances = Vec::new();

    for t in rebalance_rows(len, cfg) {
        let window = base.slice_rows(t - cfg.lookback, t);
        let value: f64 = *equity.last().unwrap();
        let (weights, fallback) = match estimate_weights(&window, cfg) {
            Ok(w) => (w.weights, None),
            Err(e) => {
                let keep = current.clone().unwrap_or_else(|| vec![1.0 / n as f64; n]);
                (keep, Some(e.to_string()))
            }
        };
        let drifted: Vec<f64> = if current.is_some() {
            holdings.iter().map(|h| h / value).collect()
        } else {
            vec![0.0; n]
        };
        let turnover = weights.iter().zip(&drifted).map(|(a, b)| (a - b).abs()).sum();
        holdings = weights.iter().map(|w| w * value).collect();
        rebalances.push(Rebalance {
            row: t,
            date: base.timestamps[t],
            weights: weights.clone(),
            turnover,
            fallback,
        });
        current = Some(weights);

        for row in t..(t + cfg.rebalance_every).min(len) {
            for (a, h) in holdings.iter_mut().enumerate() {
                *h *= base.returns[(row, a)].exp();
            }
            equity.push(holdings.iter().sum());
            dates.push(base.timestamps[row]);
        }
    }

    let metrics = metrics(&equity, TRADING_DAYS_PER_YEAR)?;
    Ok(BacktestReport {
        strategy: cfg.label(),
        config: cfg.clone(),
        asset_ids: base.asset_ids.clone(),
        dates,
        equity_curve: equity,
        metrics,
        rebalances,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub strategy: String,
    pub report: Option<BacktestReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

/// Run every config on the same panel, in parallel; rows keep config order.
pub fn compare(base: &ReturnPanel, cfgs: &[BacktestConfig]) -> Comparison {
    let results: Vec<Result<BacktestReport>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfgs
            .iter()
            .map(|cfg| scope.spawn(move || run_backtest(base, cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::InvalidParameter("backtest thread panicked".into())))
            })
            .collect()
    });
    let rows = cfgs
        .iter()
        .zip(results)
        .map(|(cfg, res)| match res {
            Ok(report) => ComparisonRow {
                strategy: cfg.label(),
                report: Some(report),
                error: None,
            },
            Err(e) => ComparisonRow {
                strategy: cfg.label(),
                report: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    Comparison { rows }
}

impl Comparison {
    /// `strategy,sharpe_ratio,sortino_ratio,max_drawdown_pct`; failed rows
    /// carry `ERROR` in every metric column.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["strategy", "sharpe_ratio", "sortino_ratio", "max_drawdown_pct", "error"])?;
        for row in &self.rows {
            match &row.report {
                Some(r) => wtr.write_record([
                    row.strategy.clone(),
                    r.metrics.sharpe.to_string(),
                    r.metrics.sortino.map_or_else(|| "NA".to_string(), |v| v.to_string()),
                    (100.0 * r.metrics.max_drawdown).to_string(),
                    String::new(),
                ])?,
                None => wtr.write_record([
                    row.strategy.as_str(),
                    "ERROR",
                    "ERROR",
                    "ERROR",
                    row.error.as_deref().unwrap_or(""),
                ])?,
            }
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    /// Aligned plain-text table with Sharpe, Sortino and max drawdown (%).
    pub fn to_text(&self) -> String {
        let header = ["Strategy", "Sharpe Ratio", "Sortino Ratio", "Max Drawdown"];
        let cells: Vec<[String; 4]> = self
            .rows
            .iter()
            .map(|row| match &row.report {
                Some(r) => [
                    row.strategy.clone(),
                    format!("{:.2}", r.metrics.sharpe),
                    r.metrics
                        .sortino
                        .map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}")),
                    format!("{:.2}%", 100.0 * r.metrics.max_drawdown),
                ],
                None => [
                    row.strategy.clone(),
                    "ERROR".into(),
                    "ERROR".into(),
                    format!("ERROR: {}", row.error.as_deref().unwrap_or("unknown")),
                ],
            })
            .collect();
        let mut widths = header.map(str::len);
        for c in &cells {
            for (w, s) in widths.iter_mut().zip(c) {
                *w = (*w).max(s.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, c: [&str; 4]| {
            let _ = writeln!(
                out,
                "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}",
                c[0],
                c[1],
                c[2],
                c[3],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2],
                w3 = widths[3]
            );
        };
        line(&mut out, header);
        for c in &cells {
            line(&mut out, [c[0].as_str(), c[1].as_str(), c[2].as_str(), c[3].as_str()]);
        }
        out
    }
}
