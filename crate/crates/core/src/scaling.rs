//! Monofractal and multifractal scaling exponents.
//!
//! Exponents follow the ζ(q)/q convention: ζ(q) is the log-log slope of the
//! moment ⟨|r_Δt|^q⟩ against Δt, and H(q) = ζ(q)/q. With this convention a
//! Brownian path has H(q) = 0.5 for every q. Two estimators are provided:
//! phase-averaged structure functions over a grid of aggregation scales, and
//! MF-DFA on the cumulative profile of a single series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;
use crate::timeseries::{all_phase_aggregates, ensure_estimable, Aggregation, ReturnPanel};

/// Daily to monthly, in trading days.
pub const DEFAULT_SCALES: [usize; 5] = [1, 2, 5, 10, 21];

pub const DEFAULT_Q_GRID: [f64; 8] = [-4.0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 4.0];

/// Ordinary least-squares fit of `ln(moment)` on `ln(scale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub r2: f64,
}

/// Fit `moment ∝ scale^exponent` by OLS in log-log space.
pub fn fit_scaling_exponent(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &(scale, moment) in points {
        if !(moment > 0.0) || !moment.is_finite() {
            return Err(Error::NonPositiveMoment { scale, moment });
        }
        if !(scale > 0.0) {
            return Err(Error::InvalidParameter(format!("scale {scale} must be positive")));
        }
        xs.push(scale.ln());
        ys.push(moment.ln());
    }
    let n = xs.len() as f64;
    let mx = stats::mean(&xs);
    let my = stats::mean(&ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidParameter("all scales are identical".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sst: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if sst > 0.0 {
        (1.0 - sse / sst).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let stderr = if n > 2.0 { (sse / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(PowerLawFit {
        exponent: slope,
        intercept,
        stderr,
        r2,
    })
}

fn abs_moment(values: impl Iterator<Item = f64>, q: f64) -> (f64, usize) {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in values {
        let a = v.abs();
        // Exact zeros are skipped for negative orders, where |0|^q diverges.
        if q < 0.0 && a == 0.0 {
            continue;
        }
        sum += a.powf(q);
        count += 1;
    }
    (sum, count)
}

/// Phase-averaged ⟨|r_Δt|^q⟩ for one asset at each requested scale.
///
/// Every scale must leave at least four observations in each non-overlapping
/// phase panel. For q < 0, exact zero returns are excluded from the average.
pub fn structure_function(base: &ReturnPanel, asset: &str, q: f64, scales: &[usize]) -> Result<Vec<(usize, f64)>> {
    if q == 0.0 || !q.is_finite() {
        return Err(Error::InvalidParameter(
            "moment order q must be finite and non-zero".into(),
        ));
    }
    let col = base.asset_index(asset)?;
    if base.returns.column(col).iter().all(|v| *v == 0.0) {
        return Err(Error::ZeroMoment {
            asset: asset.to_string(),
        });
    }
    let mut out = Vec::with_capacity(scales.len());
    for &dt in scales {
        ensure_estimable(base.len(), dt, Aggregation::NonOverlapping)?;
        let panels = all_phase_aggregates(base, dt)?;
        let mut acc = 0.0;
        let mut used = 0usize;
        for p in &panels {
            let (sum, count) = abs_moment(p.returns.column(col).iter().copied(), q);
            if count > 0 {
                acc += sum / count as f64;
                used += 1;
            }
        }
        let moment = if used == 0 { 0.0 } else { acc / used as f64 };
        out.push((dt, moment));
    }
    Ok(out)
}

fn to_points(sf: &[(usize, f64)]) -> Vec<(f64, f64)> {
    sf.iter().map(|&(s, m)| (s as f64, m)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurstEstimate {
    pub hurst: f64,
    pub stderr: f64,
    pub r2: f64,
}

/// Variance-scaling Hurst estimate H = ζ(2)/2.
pub fn estimate_hurst(base: &ReturnPanel, asset: &str, scales: &[usize]) -> Result<HurstEstimate> {
    let sf = structure_function(base, asset, 2.0, scales)?;
    let fit = fit_scaling_exponent(&to_points(&sf))?;
    Ok(HurstEstimate {
        hurst: fit.exponent / 2.0,
        stderr: fit.stderr / 2.0,
        r2: fit.r2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMethod {
    StructureFunction,
    Mfdfa,
}

/// Per-asset moment-scaling spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpectrum {
    pub asset_id: String,
    pub method: SpectrumMethod,
    /// Ascending, never containing 0.
    pub q_grid: Vec<f64>,
    /// ζ(q).
    pub zeta: Vec<f64>,
    /// H(q) = ζ(q)/q.
    pub h_of_q: Vec<f64>,
    pub stderr: Vec<f64>,
    pub fit_r2: Vec<f64>,
    /// Smallest and largest scale used in the fits.
    pub scale_range: (usize, usize),
    /// False when H(q) increases somewhere along the grid. Reported, not enforced.
    pub monotone: bool,
}

impl ScalingSpectrum {
    /// H(q) at a grid point, if present.
    pub fn h(&self, q: f64) -> Option<f64> {
        self.q_grid.iter().position(|&g| g == q).map(|i| self.h_of_q[i])
    }

    /// max H(q) − min H(q) over the grid.
    pub fn spread(&self) -> f64 {
        let max = self.h_of_q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.h_of_q.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }

    /// Largest deviation of H(q) from a reference value.
    pub fn max_deviation_from(&self, reference: f64) -> f64 {
        self.h_of_q.iter().map(|h| (h - reference).abs()).fold(0.0, f64::max)
    }
}

fn sorted_q_grid(q_grid: &[f64]) -> Result<Vec<f64>> {
    if q_grid.is_empty() {
        return Err(Error::InvalidParameter("empty q grid".into()));
    }
    if q_grid.iter().any(|q| *q == 0.0 || !q.is_finite()) {
        return Err(Error::InvalidParameter("q grid must not contain 0".into()));
    }
    let mut q = q_grid.to_vec();
    q.sort_by(f64::total_cmp);
    q.dedup();
    Ok(q)
}

fn is_non_increasing(h: &[f64]) -> bool {
    // Small tolerance so sampling jitter on a flat spectrum is not flagged.
    h.windows(2).all(|w| w[1] <= w[0] + 1e-3)
}

/// Spectrum from phase-averaged structure functions at the given scales.
pub fn structure_spectrum(
    base: &ReturnPanel,
    asset: &str,
    q_grid: &[f64],
    scales: &[usize],
) -> Result<ScalingSpectrum> {
    let q_grid = sorted_q_grid(q_grid)?;
    let mut zeta = Vec::with_capacity(q_grid.len());
    let mut stderr = Vec::with_capacity(q_grid.len());
    let mut fit_r2 = Vec::with_capacity(q_grid.len());
    for &q in &q_grid {
        let sf = structure_function(base, asset, q, scales)?;
        let fit = fit_scaling_exponent(&to_points(&sf))?;
        zeta.push(fit.exponent);
        stderr.push(fit.stderr / q.abs());
        fit_r2.push(fit.r2);
    }
    let h_of_q: Vec<f64> = zeta.iter().zip(&q_grid).map(|(z, q)| z / q).collect();
    Ok(ScalingSpectrum {
        asset_id: asset.to_string(),
        method: SpectrumMethod::StructureFunction,
        monotone: is_non_increasing(&h_of_q),
        q_grid,
        zeta,
        h_of_q,
        stderr,
        fit_r2,
        scale_range: scale_range(scales),
    })
}

fn scale_range(scales: &[usize]) -> (usize, usize) {
    (
        scales.iter().copied().min().unwrap_or(0),
        scales.iter().copied().max().unwrap_or(0),
    )
}

/// Log-spaced MF-DFA segment sizes from 16 up to `len / 4`, at most 20 distinct values.
pub fn default_mfdfa_scales(len: usize) -> Vec<usize> {
    let lo = 16.0f64;
    let hi = (len / 4) as f64;
    if hi < lo * 2.0 {
        return Vec::new();
    }
    let k = 20;
    let mut out: Vec<usize> = (0..k)
        .map(|i| (lo * (hi / lo).powf(i as f64 / (k - 1) as f64)).round() as usize)
        .collect();
    out.dedup();
    out
}

/// Orthonormal polynomial basis (degrees 0..=order) on `len` equally spaced points.
fn poly_basis(len: usize, order: usize) -> Vec<Vec<f64>> {
    let centre = (len as f64 - 1.0) / 2.0;
    let xs: Vec<f64> = (0..len).map(|i| (i as f64 - centre) / len as f64).collect();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(order + 1);
    for d in 0..=order {
        let mut v: Vec<f64> = xs.iter().map(|x| x.powi(d as i32)).collect();
        // Modified Gram-Schmidt, applied twice for stability.
        for _ in 0..2 {
            for b in &basis {
                let proj: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
                v.iter_mut().zip(b).for_each(|(a, c)| *a -= proj * c);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        basis.push(v);
    }
    basis
}

/// Mean squared residual of `seg` after removing its projection on `basis`.
fn detrended_variance(seg: &[f64], basis: &[Vec<f64>]) -> f64 {
    let mut resid = seg.to_vec();
    for b in basis {
        let proj: f64 = resid.iter().zip(b).map(|(a, c)| a * c).sum();
        resid.iter_mut().zip(b).for_each(|(a, c)| *a -= proj * c);
    }
    resid.iter().map(|r| r * r).sum::<f64>() / seg.len() as f64
}

/// Multifractal detrended fluctuation analysis of one return series.
///
/// The profile is the cumulative sum of the demeaned series. For each segment
/// size `s` the profile is cut into `⌊N/s⌋` segments from the start and again
/// from the end; each segment is detrended with a polynomial of
/// `detrend_order`. The q-th order fluctuation function is
/// `F_q(s) = (mean_v F²(v,s)^{q/2})^{1/q}` and h(q) is the slope of ln F_q(s)
/// on ln s. Segments with zero residual variance are skipped.
pub fn mfdfa(series: &[f64], q_grid: &[f64], scale_grid: &[usize], detrend_order: usize) -> Result<ScalingSpectrum> {
    if detrend_order < 1 {
        return Err(Error::InvalidParameter("detrend order must be at least 1".into()));
    }
    let q_grid = sorted_q_grid(q_grid)?;
    let n = series.len();
    let max_scale = scale_grid.iter().copied().max().unwrap_or(0);
    if scale_grid.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: scale_grid.len(),
        });
    }
    if n < 4 * max_scale {
        return Err(Error::SeriesTooShort {
            len: n,
            max_scale,
            needed: 4 * max_scale,
        });
    }
    if let Some(&s) = scale_grid.iter().find(|&&s| s <= detrend_order + 1) {
        return Err(Error::InvalidParameter(format!(
            "segment size {s} too small for detrend order {detrend_order}"
        )));
    }

    let m = stats::mean(series);
    let mut profile = Vec::with_capacity(n);
    let mut acc = 0.0;
    for x in series {
        acc += x - m;
        profile.push(acc);
    }

    // Residual variances at round-off level relative to the profile count as zero.
    let floor = 1e-24 * profile.iter().map(|y| y * y).sum::<f64>() / n as f64;

    // fq[qi][si] = F_q(s)
    let mut fq = vec![Vec::with_capacity(scale_grid.len()); q_grid.len()];
    for &s in scale_grid {
        let basis = poly_basis(s, detrend_order);
        let segs = n / s;
        let mut variances = Vec::with_capacity(2 * segs);
        for v in 0..segs {
            variances.push(detrended_variance(&profile[v * s..(v + 1) * s], &basis));
        }
        for v in 0..segs {
            let end = n - v * s;
            variances.push(detrended_variance(&profile[end - s..end], &basis));
        }
        let positive: Vec<f64> = variances.into_iter().filter(|f2| *f2 > floor).collect();
        if positive.is_empty() {
            return Err(Error::DegenerateSegments);
        }
        for (qi, &q) in q_grid.iter().enumerate() {
            let avg = positive.iter().map(|f2| f2.powf(q / 2.0)).sum::<f64>() / positive.len() as f64;
            fq[qi].push(avg.powf(1.0 / q));
        }
    }

    let mut h_of_q = Vec::with_capacity(q_grid.len());
    let mut stderr = Vec::with_capacity(q_grid.len());
    let mut fit_r2 = Vec::with_capacity(q_grid.len());
    for row in &fq {
        let points: Vec<(f64, f64)> = scale_grid.iter().zip(row).map(|(&s, &f)| (s as f64, f)).collect();
        let fit = fit_scaling_exponent(&points)?;
        h_of_q.push(fit.exponent);
        stderr.push(fit.stderr);
        fit_r2.push(fit.r2);
    }
    let zeta = h_of_q.iter().zip(&q_grid).map(|(h, q)| h * q).collect();
    Ok(ScalingSpectrum {
        asset_id: String::new(),
        method: SpectrumMethod::Mfdfa,
        monotone: is_non_increasing(&h_of_q),
        q_grid,
        zeta,
        h_of_q,
        stderr,
        fit_r2,
        scale_range: scale_range(scale_grid),
    })
}

/// [`mfdfa`] on one column of a panel.
pub fn mfdfa_asset(
    base: &ReturnPanel,
    asset: &str,
    q_grid: &[f64],
    scale_grid: &[usize],
    detrend_order: usize,
) -> Result<ScalingSpectrum> {
    let idx = base.asset_index(asset)?;
    let mut spec = mfdfa(&base.column(idx), q_grid, scale_grid, detrend_order)?;
    spec.asset_id = asset.to_string();
    Ok(spec)
}

/// Scale dependence of the correlation between two assets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationScaling {
    pub asset_i: String,
    pub asset_j: String,
    /// Phase-averaged Pearson correlation at each scale.
    pub rho_by_scale: Vec<(usize, f64)>,
    /// Exponent of ρ_ij(Δt) ∝ Δt^{H_rho}.
    pub h_rho: PowerLawFit,
    /// Slope of the pairwise moment ⟨r_i r_j⟩ against Δt.
    pub h_ij_2: PowerLawFit,
    /// First-order structure-function exponents of each asset.
    pub h_i_1: PowerLawFit,
    pub h_j_1: PowerLawFit,
    /// Some scale had ρ ≤ 0 (or a non-positive cross moment); the fit used absolute values.
    pub negative_correlation: bool,
    /// H_rho − (H_ij(2) − H_i(1) − H_j(1)).
    pub identity_residual: f64,
    /// Root-sum-square of the four fit standard errors.
    pub combined_stderr: f64,
    pub scale_range: (usize, usize),
}

impl CorrelationScaling {
    /// Whether the identity residual lies within `k` combined standard errors.
    pub fn identity_holds(&self, k: f64) -> bool {
        self.identity_residual.abs() < k * self.combined_stderr
    }
}

/// Fit ρ_ij(Δt) ∝ Δt^{H_rho} and the companion pairwise exponents.
pub fn estimate_correlation_scaling(
    base: &ReturnPanel,
    asset_i: &str,
    asset_j: &str,
    scales: &[usize],
) -> Result<CorrelationScaling> {
    let i = base.asset_index(asset_i)?;
    let j = base.asset_index(asset_j)?;
    let mut rho_by_scale = Vec::with_capacity(scales.len());
    let mut cross = Vec::with_capacity(scales.len());
    let mut negative = false;
    for &dt in scales {
        ensure_estimable(base.len(), dt, Aggregation::NonOverlapping)?;
        let panels = all_phase_aggregates(base, dt)?;
        let mut rho_acc = 0.0;
        let mut cross_acc = 0.0;
        for p in &panels {
            let xi = p.column(i);
            let xj = p.column(j);
            let rho = stats::pearson(&xi, &xj).ok_or_else(|| Error::ZeroMoment {
                asset: format!("{asset_i}/{asset_j} at scale {dt}"),
            })?;
            rho_acc += rho;
            cross_acc += xi.iter().zip(&xj).map(|(a, b)| a * b).sum::<f64>() / xi.len() as f64;
        }
        let rho = rho_acc / panels.len() as f64;
        let c = cross_acc / panels.len() as f64;
        if rho <= 0.0 || c <= 0.0 {
            negative = true;
        }
        rho_by_scale.push((dt, rho));
        cross.push((dt as f64, c.abs()));
    }
    let rho_points: Vec<(f64, f64)> = rho_by_scale.iter().map(|&(s, r)| (s as f64, r.abs())).collect();
    let h_rho = fit_scaling_exponent(&rho_points)?;
    let h_ij_2 = fit_scaling_exponent(&cross)?;
    let h_i_1 = fit_scaling_exponent(&to_points(&structure_function(base, asset_i, 1.0, scales)?))?;
    let h_j_1 = fit_scaling_exponent(&to_points(&structure_function(base, asset_j, 1.0, scales)?))?;
    let identity_residual = h_rho.exponent - (h_ij_2.exponent - h_i_1.exponent - h_j_1.exponent);
    let combined_stderr =
        (h_rho.stderr.powi(2) + h_ij_2.stderr.powi(2) + h_i_1.stderr.powi(2) + h_j_1.stderr.powi(2)).sqrt();
    Ok(CorrelationScaling {
        asset_i: asset_i.to_string(),
        asset_j: asset_j.to_string(),
        rho_by_scale,
        h_rho,
        h_ij_2,
        h_i_1,
        h_j_1,
        negative_correlation: negative,
        identity_residual,
        combined_stderr,
        scale_range: scale_range(scales),
    })
}
