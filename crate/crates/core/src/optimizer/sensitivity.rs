//! Derivatives of closed-form minimum-variance weights with respect to a
//! variance, a Hurst exponent and a pairwise correlation.
//!
//! With s = Σ⁻¹1, S = 1ᵀs and w_k = s_k/S:
//!   ∂s_k/∂σ_k² = −(Σ⁻¹)_kk s_k,   ∂S/∂σ_k² = −s_k²,
//!   ∂w_k/∂σ_k² = s_k(s_k² − (Σ⁻¹)_kk S)/S².
//! Cauchy-Schwarz gives (Σ⁻¹)_kk S ≥ s_k², so the sign is that of −s_k.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::covariance::ScaledCovarianceSet;
use crate::error::{Error, Result};

use super::{closed_form_weights, inverse_ones, pd_solve};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub k: usize,
    /// Σ⁻¹1.
    pub s: Vec<f64>,
    /// 1ᵀΣ⁻¹1.
    pub s_total: f64,
    /// Budget multiplier 2/S, reported only.
    pub lambda: f64,
    pub weight: f64,
    /// Σ_kk at which the derivatives were taken.
    pub variance: f64,
    pub inverse_kk: f64,
    pub dsk_dsigma2: f64,
    pub ds_total_dsigma2: f64,
    pub dwk_dsigma2: f64,
}

impl SensitivityReport {
    /// ∂w_k/∂H_k when the matrix is Σ(Δt) and σ_k²(Δt) = σ_k²(1)Δt^{2H_k}.
    pub fn dwk_dh(&self, dt: usize) -> f64 {
        if dt <= 1 {
            return 0.0;
        }
        self.dwk_dsigma2 * 2.0 * (dt as f64).ln() * self.variance
    }

    /// Whether raising σ_k² lowers w_k; holds exactly when s_k > 0.
    pub fn is_decreasing(&self) -> bool {
        self.dwk_dsigma2 < 0.0
    }
}

pub fn sensitivity_to_variance(sigma: &DMatrix<f64>, k: usize) -> Result<SensitivityReport> {
    let n = sigma.nrows();
    if k >= n {
        return Err(Error::InvalidParameter(format!(
            "asset index {k} out of range for {n} assets"
        )));
    }
    let (s, total) = inverse_ones(sigma)?;
    let inverse_col = pd_solve(sigma, &super::unit(n, k))?;
    let inverse_kk = inverse_col[k];
    let sk = s[k];
    Ok(SensitivityReport {
        k,
        s: s.iter().copied().collect(),
        s_total: total,
        lambda: 2.0 / total,
        weight: sk / total,
        variance: sigma[(k, k)],
        inverse_kk,
        dsk_dsigma2: -inverse_kk * sk,
        ds_total_dsigma2: -sk * sk,
        dwk_dsigma2: sk * (sk * sk - inverse_kk * total) / (total * total),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurstSensitivity {
    pub scale: usize,
    pub value: f64,
    /// Set at Δt = 1, where ln Δt = 0 makes the derivative vanish.
    pub scale_one: bool,
}

/// ∂w_k/∂H_k for the minimum-variance portfolio built on Σ(Δt).
pub fn sensitivity_to_hurst(set: &ScaledCovarianceSet, k: usize, dt: usize) -> Result<HurstSensitivity> {
    let sigma = set
        .get(dt)
        .ok_or_else(|| Error::InvalidParameter(format!("scale {dt} not in covariance set")))?;
    if dt == 1 {
        if k >= sigma.nrows() {
            return Err(Error::InvalidParameter(format!("asset index {k} out of range")));
        }
        return Ok(HurstSensitivity {
            scale: 1,
            value: 0.0,
            scale_one: true,
        });
    }
    let report = sensitivity_to_variance(sigma, k)?;
    Ok(HurstSensitivity {
        scale: dt,
        value: report.dwk_dh(dt),
        scale_one: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSensitivity {
    pub i: usize,
    pub j: usize,
    pub dwi_drho: f64,
    pub dwj_drho: f64,
    /// ∂(w_i + w_j)/∂ρ_ij from the analytic per-weight derivatives.
    pub combined_analytic: f64,
    /// The same derivative by central differences.
    pub combined_numeric: f64,
}

impl CorrelationSensitivity {
    /// Chain rule through ρ_ij(Δt) ∝ Δt^{H_ij}: multiply by Δt^{H_ij} ln Δt.
    pub fn wrt_correlation_exponent(&self, h_ij: f64, dt: usize) -> f64 {
        self.combined_analytic * (dt as f64).powf(h_ij) * (dt as f64).ln()
    }
}

fn with_correlation(sigma: &DMatrix<f64>, i: usize, j: usize, rho: f64) -> DMatrix<f64> {
    let mut m = sigma.clone();
    let c = rho * (sigma[(i, i)] * sigma[(j, j)]).sqrt();
    m[(i, j)] = c;
    m[(j, i)] = c;
    m
}

fn correlation(sigma: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    sigma[(i, j)] / (sigma[(i, i)] * sigma[(j, j)]).sqrt()
}

fn check_pair(sigma: &DMatrix<f64>, i: usize, j: usize) -> Result<()> {
    let n = sigma.nrows();
    if i == j || i >= n || j >= n {
        return Err(Error::InvalidParameter(format!(
            "need two distinct assets below {n}, got {i} and {j}"
        )));
    }
    Ok(())
}

/// Sensitivity of the unconstrained weights w_i, w_j to ρ_ij, holding the
/// variances and all other entries fixed.
pub fn combined_weight_correlation_sensitivity(
    sigma: &DMatrix<f64>,
    i: usize,
    j: usize,
) -> Result<CorrelationSensitivity> {
    check_pair(sigma, i, j)?;
    let (s, total) = inverse_ones(sigma)?;
    let n = sigma.nrows();
    let sij = (sigma[(i, i)] * sigma[(j, j)]).sqrt();
    // ∂Σ/∂ρ = σ_iσ_j (E_ij + E_ji).
    let mut d = DMatrix::zeros(n, n);
    d[(i, j)] = sij;
    d[(j, i)] = sij;
    let ds = -pd_solve(sigma, &(&d * &s))?;
    let dtotal = ds.sum();
    let dw = (&ds * total - &s * dtotal) / (total * total);

    let rho = correlation(sigma, i, j);
    let h = 1e-6;
    let pair_sum = |r: f64| -> Result<f64> {
        let w = closed_form_weights(&with_correlation(sigma, i, j, r))?;
        Ok(w[i] + w[j])
    };
    let numeric = (pair_sum(rho + h)? - pair_sum(rho - h)?) / (2.0 * h);
    Ok(CorrelationSensitivity {
        i,
        j,
        dwi_drho: dw[i],
        dwj_drho: dw[j],
        combined_analytic: dw[i] + dw[j],
        combined_numeric: numeric,
    })
}

/// Assets i and j merged into one synthetic asset with a frozen split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBlock {
    /// Share of asset i inside the block; j holds 1 − theta.
    pub theta: f64,
    /// Closed-form weight of the synthetic asset.
    pub weight: f64,
    /// ∂weight/∂ρ_ij with theta held fixed.
    pub dweight_drho: f64,
}

fn reduced(sigma: &DMatrix<f64>, i: usize, j: usize, theta: f64, rho: f64) -> DMatrix<f64> {
    let n = sigma.nrows();
    let others: Vec<usize> = (0..n).filter(|&k| k != i && k != j).collect();
    let (si, sj) = (sigma[(i, i)].sqrt(), sigma[(j, j)].sqrt());
    let (a, b) = (theta, 1.0 - theta);
    let block_var = a * a * si * si + b * b * sj * sj + 2.0 * a * b * rho * si * sj;
    DMatrix::from_fn(n - 1, n - 1, |r, c| match (r, c) {
        (0, 0) => block_var,
        (0, c) => a * sigma[(i, others[c - 1])] + b * sigma[(j, others[c - 1])],
        (r, 0) => a * sigma[(i, others[r - 1])] + b * sigma[(j, others[r - 1])],
        (r, c) => sigma[(others[r - 1], others[c - 1])],
    })
}

/// Closed-form weight of the synthetic asset at correlation `rho`.
pub fn synthetic_block_weight(sigma: &DMatrix<f64>, i: usize, j: usize, theta: f64, rho: f64) -> Result<f64> {
    check_pair(sigma, i, j)?;
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidParameter(format!("block split {theta} outside [0, 1]")));
    }
    Ok(closed_form_weights(&reduced(sigma, i, j, theta, rho))?[0])
}

/// Reduced problem at the current Σ, with the split frozen at the closed-form
/// ratio w_i / (w_i + w_j).
pub fn synthetic_block(sigma: &DMatrix<f64>, i: usize, j: usize) -> Result<SyntheticBlock> {
    check_pair(sigma, i, j)?;
    let w = closed_form_weights(sigma)?;
    let pair = w[i] + w[j];
    if !(pair.abs() > 1e-300) {
        return Err(Error::InvalidParameter("block weight is zero".into()));
    }
    let theta = w[i] / pair;
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidParameter(format!("block split {theta} outside [0, 1]")));
    }
    let rho = correlation(sigma, i, j);
    let red = reduced(sigma, i, j, theta, rho);
    let report = sensitivity_to_variance(&red, 0)?;
    let dvar_drho = 2.0 * theta * (1.0 - theta) * (sigma[(i, i)] * sigma[(j, j)]).sqrt();
    Ok(SyntheticBlock {
        theta,
        weight: report.weight,
        dweight_drho: report.dwk_dsigma2 * dvar_drho,
    })
}
