//! Per-scale comparison of portfolio variance against a target curve.

use serde::{Deserialize, Serialize};

use crate::covariance::ScaledCovarianceSet;
use crate::error::{Error, Result};

use super::PortfolioWeights;

/// Relative slack allowed before a scale is reported as exceeding its target.
const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetCurveRow {
    pub scale: usize,
    pub portfolio_variance: f64,
    pub target_variance: f64,
    /// portfolio_variance / target_variance.
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetCurveReport {
    /// Human-readable statement of the target law that was applied.
    pub convention: String,
    pub rows: Vec<TargetCurveRow>,
    pub all_pass: bool,
}

/// Compare wᵀΣ(Δt)w with the power-law target whose standard deviation
/// scales as σ_target(1)·Δt^H, i.e. variance σ_target(1)²·Δt^{2H}.
pub fn check_target_curve(
    w: &PortfolioWeights,
    set: &ScaledCovarianceSet,
    sigma_target_daily: f64,
    h_target: f64,
) -> Result<TargetCurveReport> {
    if !(sigma_target_daily > 0.0) || !h_target.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "target daily std {sigma_target_daily} and exponent {h_target} must be positive and finite"
        )));
    }
    let table: Vec<(usize, f64)> = set
        .scales()
        .into_iter()
        .map(|dt| (dt, sigma_target_daily.powi(2) * (dt as f64).powf(2.0 * h_target)))
        .collect();
    let mut report = check_target_table(w, set, &table)?;
    report.convention = format!("std(dt) = {sigma_target_daily} * dt^{h_target}");
    Ok(report)
}

/// Compare against an arbitrary table of (Δt, target variance) pairs.
pub fn check_target_table(
    w: &PortfolioWeights,
    set: &ScaledCovarianceSet,
    table: &[(usize, f64)],
) -> Result<TargetCurveReport> {
    if w.asset_ids != set.asset_ids {
        return Err(Error::UniverseMismatch);
    }
    let rows = table
        .iter()
        .map(|&(dt, target)| {
            let sigma = set
                .get(dt)
                .ok_or_else(|| Error::InvalidParameter(format!("scale {dt} not in covariance set")))?;
            let v = w.variance(sigma);
            let ratio = v / target;
            Ok(TargetCurveRow {
                scale: dt,
                portfolio_variance: v,
                target_variance: target,
                ratio,
                pass: ratio <= 1.0 + TOLERANCE,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TargetCurveReport {
        convention: "per-scale variance table".into(),
        all_pass: rows.iter().all(|r| r.pass),
        rows,
    })
}
