use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use multiscale::backtest::{compare, BacktestConfig, Comparison, Strategy};
use multiscale::covariance::{
    default_ridge, multiscale_cov, write_matrix_csv, CovMethod, MultiscaleCovariance, ScaledCovarianceSet,
};
use multiscale::optimizer::{
    average_weights_across_scales, check_target_curve, max_sharpe, min_variance_closed_form, min_variance_long_only,
    min_variance_with_return_floor, sensitivity_to_hurst, sensitivity_to_variance, HurstSensitivity, PortfolioWeights,
    SensitivityReport, TargetCurveReport,
};
use multiscale::scaling::{
    default_mfdfa_scales, estimate_correlation_scaling, estimate_hurst, mfdfa_asset, structure_spectrum,
    CorrelationScaling, HurstEstimate, ScalingSpectrum,
};
use multiscale::synth::{GeneratorSpec, RegimePanelSpec};
use multiscale::timeseries::{load_prices, to_log_returns, write_prices, Aggregation, PriceSeries, ReturnPanel};

use crate::args::{
    BacktestArgs, Command, EstimateArgs, Kind, Objective, OptimizeArgs, ReproArgs, ScaleArgs, SimulateArgs,
    SpectrumKind, StrategyArg,
};
use crate::output::{write_atomic, write_json, write_text, OutDir};
use crate::CliError;

/// Price rows are rebuilt from this level.
const START_PRICE: f64 = 100.0;

pub fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Simulate(a) => simulate(&a),
        Command::Estimate(a) => estimate(&a),
        Command::Optimize(a) => optimize(&a),
        Command::Backtest(a) => backtest(&a),
        Command::Repro(a) => repro(&a),
    }
}

fn load_panel(path: &Path) -> Result<ReturnPanel, CliError> {
    Ok(to_log_returns(&load_prices(path)?)?)
}

fn write_price_csv(path: &Path, prices: &PriceSeries) -> Result<(), CliError> {
    write_atomic(path, |w| Ok(write_prices(prices, w)?))
}

fn parse_matrix(s: &str) -> Result<Vec<Vec<f64>>, CliError> {
    s.split(';')
        .map(|row| {
            row.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| CliError::Usage(format!("--cov-matrix: `{}` is not a number", v.trim())))
                })
                .collect()
        })
        .collect()
}

fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let spec = match a.kind {
        Kind::Gaussian => GeneratorSpec::GaussianIid {
            n: a.n,
            sigma: a.sigma,
            seed: a.seed,
        },
        Kind::Fgn => GeneratorSpec::Fgn {
            n: a.n,
            hurst: a.hurst,
            sigma: a.sigma,
            seed: a.seed,
        },
        Kind::Correlated => {
            let rows = a
                .cov_matrix
                .as_deref()
                .ok_or_else(|| CliError::Usage("--kind correlated requires --cov-matrix".into()))?;
            GeneratorSpec::Correlated {
                n: a.n,
                sigma_matrix: parse_matrix(rows)?,
                seed: a.seed,
            }
        }
        Kind::Epps => GeneratorSpec::Epps {
            n: a.n,
            rho_inf: a.rho_inf,
            h_rho: a.h_rho,
            sigma: a.sigma,
            seed: a.seed,
        },
        Kind::Regime => GeneratorSpec::RegimeSwitch {
            spec: RegimePanelSpec {
                n: a.n,
                sigma_low: a.sigma_low.clone(),
                sigma_high: a.sigma_high.clone(),
                correlation: a.correlation,
                switch_points: a.switch_points.clone(),
            },
            seed: a.seed,
        },
        Kind::Cascade => GeneratorSpec::Cascade {
            n: a.n,
            intermittency: a.intermittency,
            h_base: a.h_base,
            sigma: a.sigma,
            seed: a.seed,
        },
    };
    let panel = spec.generate()?;
    let prices = PriceSeries::from_returns(&panel, START_PRICE)?;
    let out = OutDir::new(a.common.out_dir.as_deref());
    write_price_csv(&out.path(&a.out), &prices)
}

fn multiscale_with_ridge(set: &ScaledCovarianceSet, ridge: Option<f64>) -> Result<MultiscaleCovariance, CliError> {
    let ridge = match ridge {
        Some(r) => r,
        None => default_ridge(&multiscale_cov(set, 0.0)?.matrix),
    };
    Ok(multiscale_cov(set, ridge)?)
}

fn covariance_set(panel: &ReturnPanel, s: &ScaleArgs) -> Result<ScaledCovarianceSet, CliError> {
    Ok(ScaledCovarianceSet::estimate(panel, &s.scales, s.cov, s.aggregation)?)
}

#[derive(Serialize)]
struct AssetScalingReport {
    asset_id: String,
    hurst: HurstEstimate,
    spectrum: ScalingSpectrum,
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    input: String,
    returns: usize,
    scales: &'a [usize],
    assets: Vec<AssetScalingReport>,
    pairs: Vec<CorrelationScaling>,
    covariance: ScaledCovarianceSet,
    multiscale: MultiscaleCovariance,
}

fn estimate(a: &EstimateArgs) -> Result<(), CliError> {
    let panel = load_panel(&a.input)?;
    let scales = &a.scale.scales;
    let mut assets = Vec::with_capacity(panel.n_assets());
    for id in &panel.asset_ids {
        let hurst = estimate_hurst(&panel, id, scales)?;
        let spectrum = match a.method {
            SpectrumKind::Sf => structure_spectrum(&panel, id, &a.q_grid, scales)?,
            SpectrumKind::Mfdfa => {
                let grid = if a.mfdfa_scales.is_empty() {
                    default_mfdfa_scales(panel.len())
                } else {
                    a.mfdfa_scales.clone()
                };
                mfdfa_asset(&panel, id, &a.q_grid, &grid, a.detrend_order)?
            }
        };
        assets.push(AssetScalingReport {
            asset_id: id.clone(),
            hurst,
            spectrum,
        });
    }
    let mut pairs = Vec::new();
    if a.pairs {
        for i in 0..panel.n_assets() {
            for j in i + 1..panel.n_assets() {
                pairs.push(estimate_correlation_scaling(
                    &panel,
                    &panel.asset_ids[i],
                    &panel.asset_ids[j],
                    scales,
                )?);
            }
        }
    }
    let set = covariance_set(&panel, &a.scale)?;
    let ms = multiscale_with_ridge(&set, a.scale.ridge)?;

    let mut text = String::new();
    let _ = writeln!(
        text,
        "{:<10} {:>8} {:>8} {:>8} {:>8} {:>9}",
        "asset", "H", "stderr", "h(2)", "spread", "monotone"
    );
    for r in &assets {
        let h2 = r.spectrum.h(2.0).map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
        let _ = writeln!(
            text,
            "{:<10} {:>8.3} {:>8.3} {:>8} {:>8.3} {:>9}",
            r.asset_id,
            r.hurst.hurst,
            r.hurst.stderr,
            h2,
            r.spectrum.spread(),
            r.spectrum.monotone
        );
    }
    if !pairs.is_empty() {
        let _ = writeln!(
            text,
            "\n{:<10} {:<10} {:>8} {:>10} {:>9}",
            "asset i", "asset j", "H_rho", "residual", "identity"
        );
        for p in &pairs {
            let _ = writeln!(
                text,
                "{:<10} {:<10} {:>8.3} {:>10.3} {:>9}",
                p.asset_i,
                p.asset_j,
                p.h_rho.exponent,
                p.identity_residual,
                p.identity_holds(2.0)
            );
        }
    }
    print!("{text}");

    let out = OutDir::new(a.common.out_dir.as_deref());
    write_atomic(&out.path(&a.cov_out), |w| {
        Ok(write_matrix_csv(&ms.asset_ids, &ms.matrix, w)?)
    })?;
    write_json(
        &out.path(&a.report),
        &EstimateReport {
            input: a.input.display().to_string(),
            returns: panel.len(),
            scales,
            assets,
            pairs,
            covariance: set,
            multiscale: ms,
        },
    )
}

#[derive(Serialize)]
struct ScaleVariance {
    scale: usize,
    variance: f64,
}

#[derive(Serialize)]
struct Sensitivities {
    /// Closed-form weights; the reported derivatives refer to these.
    closed_form_weights: Vec<f64>,
    variance: Vec<SensitivityReport>,
    hurst: Vec<HurstSensitivity>,
}

#[derive(Serialize)]
struct OptimizeReport {
    input: String,
    objective: &'static str,
    mu_target: Option<f64>,
    risk_free: f64,
    weights: PortfolioWeights,
    mean_returns: Vec<f64>,
    expected_return: f64,
    multiscale_variance: f64,
    ridge: f64,
    per_scale_variance: Vec<ScaleVariance>,
    target_curve: Option<TargetCurveReport>,
    sensitivities: Option<Sensitivities>,
}

fn min_variance(ms: &MultiscaleCovariance, long_only: bool) -> Result<PortfolioWeights, CliError> {
    Ok(if long_only {
        min_variance_long_only(ms)?
    } else {
        min_variance_closed_form(ms)?
    })
}

fn optimize(a: &OptimizeArgs) -> Result<(), CliError> {
    let panel = load_panel(&a.input)?;
    let set = covariance_set(&panel, &a.scale)?;
    let ms = multiscale_with_ridge(&set, a.scale.ridge)?;
    let mu = panel.mean_returns();
    if a.mu_target.is_some() && a.objective != Objective::Minvar {
        return Err(CliError::Usage("--mu-target applies only to --objective minvar".into()));
    }
    let (weights, objective) = match a.objective {
        Objective::Minvar => match a.mu_target {
            Some(t) => (min_variance_with_return_floor(&ms, &mu, t)?, "minvar"),
            None => (min_variance(&ms, a.long_only)?, "minvar"),
        },
        Objective::Maxsharpe => (max_sharpe(&ms, &mu, a.risk_free, a.long_only)?, "maxsharpe"),
        Objective::Averaged => {
            let per_scale = a
                .scale
                .scales
                .iter()
                .map(|&dt| {
                    let single = ScaledCovarianceSet::estimate(&panel, &[dt], a.scale.cov, a.scale.aggregation)?;
                    min_variance(&multiscale_with_ridge(&single, a.scale.ridge)?, a.long_only)
                })
                .collect::<Result<Vec<_>, _>>()?;
            (average_weights_across_scales(&per_scale)?, "averaged")
        }
    };

    let per_scale_variance = set
        .scales()
        .into_iter()
        .filter_map(|dt| {
            set.get(dt).map(|m| ScaleVariance {
                scale: dt,
                variance: weights.variance(m),
            })
        })
        .collect();
    let target_curve = match (a.target_sigma, a.target_h) {
        (Some(s), Some(h)) => Some(check_target_curve(&weights, &set, s, h)?),
        _ => None,
    };
    let sensitivities = if a.sensitivity {
        let max_scale = set.scales().into_iter().max().unwrap_or(1);
        let n = ms.dim();
        Some(Sensitivities {
            closed_form_weights: min_variance_closed_form(&ms)?.weights,
            variance: (0..n)
                .map(|k| sensitivity_to_variance(&ms.matrix, k))
                .collect::<Result<_, _>>()?,
            hurst: (0..n)
                .map(|k| sensitivity_to_hurst(&set, k, max_scale))
                .collect::<Result<_, _>>()?,
        })
    } else {
        None
    };

    let mut text = String::new();
    let _ = writeln!(text, "{:<10} {:>10}", "asset", "weight");
    for (id, w) in weights.asset_ids.iter().zip(&weights.weights) {
        let _ = writeln!(text, "{id:<10} {w:>10.4}");
    }
    let expected_return: f64 = weights.weights.iter().zip(&mu).map(|(w, m)| w * m).sum();
    let multiscale_variance = weights.variance(&ms.matrix);
    let _ = writeln!(text, "\nexpected daily return {expected_return:.6e}");
    let _ = writeln!(text, "multiscale daily variance {multiscale_variance:.6e}");
    if let Some(tc) = &target_curve {
        let _ = writeln!(
            text,
            "target curve ({}): {}",
            tc.convention,
            if tc.all_pass { "within" } else { "exceeded" }
        );
    }
    print!("{text}");

    let out = OutDir::new(a.common.out_dir.as_deref());
    write_atomic(&out.path(&a.weights_out), |w| Ok(weights.write_csv(w)?))?;
    write_json(
        &out.path(&a.report),
        &OptimizeReport {
            input: a.input.display().to_string(),
            objective,
            mu_target: a.mu_target,
            risk_free: a.risk_free,
            mean_returns: mu,
            expected_return,
            multiscale_variance,
            ridge: ms.ridge,
            weights,
            per_scale_variance,
            target_curve,
            sensitivities,
        },
    )
}

#[derive(Serialize)]
struct BacktestEcho {
    lookback: usize,
    rebalance: usize,
    scales: Vec<usize>,
    covariance_method: CovMethod,
    aggregation: Aggregation,
    risk_free: f64,
    ridge: Option<f64>,
    strategies: Vec<String>,
}

#[derive(Serialize)]
struct BacktestJson<'a> {
    config: BacktestEcho,
    input: String,
    comparison: &'a Comparison,
}

fn strategy(s: StrategyArg) -> Strategy {
    match s {
        StrategyArg::EqualWeight => Strategy::EqualWeight,
        StrategyArg::MarkowitzDaily => Strategy::MarkowitzDaily,
        StrategyArg::MarkowitzMultiscale => Strategy::MarkowitzMultiscale,
        StrategyArg::MaxSharpeDaily => Strategy::MaxSharpeDaily,
        StrategyArg::MaxSharpeMultiscale => Strategy::MaxSharpeMultiscale,
    }
}

fn write_equity(path: &Path, cmp: &Comparison) -> Result<(), CliError> {
    let rows: Vec<_> = cmp
        .rows
        .iter()
        .filter_map(|r| r.report.as_ref().map(|rep| (&r.strategy, rep)))
        .collect();
    write_atomic(path, |w| {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["date".to_string()];
        header.extend(rows.iter().map(|(s, _)| s.to_string()));
        wtr.write_record(&header).map_err(multiscale::Error::from)?;
        if let Some((_, first)) = rows.first() {
            for (t, date) in first.dates.iter().enumerate() {
                let mut rec = vec![date.to_string()];
                rec.extend(
                    rows.iter()
                        .map(|(_, rep)| rep.equity_curve.get(t).map_or(String::new(), |v| v.to_string())),
                );
                wtr.write_record(&rec).map_err(multiscale::Error::from)?;
            }
        }
        wtr.flush().map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn write_weight_history(path: &Path, cmp: &Comparison) -> Result<(), CliError> {
    write_atomic(path, |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["strategy", "date", "asset_id", "weight"])
            .map_err(multiscale::Error::from)?;
        for row in &cmp.rows {
            let Some(rep) = &row.report else { continue };
            for rb in &rep.rebalances {
                for (id, wt) in rep.asset_ids.iter().zip(&rb.weights) {
                    wtr.write_record([row.strategy.clone(), rb.date.to_string(), id.clone(), wt.to_string()])
                        .map_err(multiscale::Error::from)?;
                }
            }
        }
        wtr.flush().map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn backtest(a: &BacktestArgs) -> Result<(), CliError> {
    let panel = load_panel(&a.input)?;
    let base = BacktestConfig {
        lookback: a.lookback,
        rebalance_every: a.rebalance,
        scales: a.scale.scales.clone(),
        covariance_method: a.scale.cov,
        aggregation: a.scale.aggregation,
        risk_free: a.risk_free,
        ridge: a.scale.ridge,
        ..BacktestConfig::default()
    };
    let cfgs = if a.strategy.is_empty() {
        BacktestConfig::standard_suite(&base)
    } else {
        a.strategy
            .iter()
            .map(|&s| BacktestConfig {
                strategy: strategy(s),
                ..base.clone()
            })
            .collect()
    };
    for cfg in &cfgs {
        cfg.validate(Some(panel.len()))?;
    }
    let cmp = compare(&panel, &cfgs);
    print!("{}", cmp.to_text());

    let out = OutDir::new(a.common.out_dir.as_deref());
    write_json(
        &out.path(&a.report),
        &BacktestJson {
            config: BacktestEcho {
                lookback: a.lookback,
                rebalance: a.rebalance,
                scales: base.scales.clone(),
                covariance_method: base.covariance_method,
                aggregation: base.aggregation,
                risk_free: base.risk_free,
                ridge: base.ridge,
                strategies: cfgs.iter().map(BacktestConfig::label).collect(),
            },
            input: a.input.display().to_string(),
            comparison: &cmp,
        },
    )?;
    write_atomic(&out.path(&a.metrics_out), |w| Ok(cmp.write_csv(w)?))?;
    write_equity(&out.path(&a.equity_out), &cmp)?;
    write_weight_history(&out.path(&a.weights_out), &cmp)?;

    let failed = cmp.rows.iter().filter(|r| r.report.is_none()).count();
    for r in cmp.rows.iter().filter(|r| r.report.is_none()) {
        eprintln!("{}: {}", r.strategy, r.error.as_deref().unwrap_or("unknown error"));
    }
    if failed > 0 {
        return Err(CliError::FailedRows {
            failed,
            total: cmp.rows.len(),
        });
    }
    Ok(())
}

fn repro(a: &ReproArgs) -> Result<(), CliError> {
    let (panel, summary) = multiscale::repro::run_repro(a.seed)?;
    let text = summary.to_text();
    print!("{text}");
    let out = OutDir::new(a.common.out_dir.as_deref());
    write_price_csv(
        &out.path(&a.prices_out),
        &PriceSeries::from_returns(&panel, START_PRICE)?,
    )?;
    write_json(&out.path(&a.report), &summary)?;
    write_text(&out.path(&a.summary), &text)
}
