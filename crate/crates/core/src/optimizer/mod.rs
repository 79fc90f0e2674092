//! Minimum-variance and maximum-Sharpe allocation under budget, long-only
//! and return-floor constraints, plus weight sensitivities and target-curve
//! checks.

mod qp;
mod sensitivity;
mod target;

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::covariance::{CovMethod, MultiscaleCovariance};
use crate::error::{Error, Result};
use crate::timeseries::Aggregation;

use qp::{Constraint, Qp, QpFailure, QpSolution};

pub use sensitivity::{
    combined_weight_correlation_sensitivity, sensitivity_to_hurst, sensitivity_to_variance, synthetic_block,
    synthetic_block_weight, CorrelationSensitivity, HurstSensitivity, SensitivityReport, SyntheticBlock,
};
pub use target::{check_target_curve, check_target_table, TargetCurveReport, TargetCurveRow};

/// Condition number above which a covariance counts as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MinVar,
    MaxSharpe,
    Averaged,
    EqualWeight,
}

/// What the weights were estimated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scales: Vec<usize>,
    pub covariance_method: CovMethod,
    pub aggregation: Aggregation,
}

impl Provenance {
    fn of(sigma: &MultiscaleCovariance) -> Self {
        Self {
            scales: sigma.scales.clone(),
            covariance_method: sigma.method,
            aggregation: sigma.aggregation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioWeights {
    pub asset_ids: Vec<String>,
    pub weights: Vec<f64>,
    pub method: Method,
    pub long_only: bool,
    pub provenance: Provenance,
    /// Stationarity residual of the returned point, when a solver produced it.
    pub kkt_residual: Option<f64>,
}

impl PortfolioWeights {
    pub fn equal(asset_ids: Vec<String>) -> Self {
        let n = asset_ids.len();
        Self {
            weights: vec![1.0 / n as f64; n],
            asset_ids,
            method: Method::EqualWeight,
            long_only: true,
            provenance: Provenance {
                scales: Vec::new(),
                covariance_method: CovMethod::Product,
                aggregation: Aggregation::NonOverlapping,
            },
            kkt_residual: None,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn get(&self, asset: &str) -> Option<f64> {
        self.asset_ids.iter().position(|a| a == asset).map(|i| self.weights[i])
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.weights)
    }

    /// `wᵀΣw`.
    pub fn variance(&self, sigma: &DMatrix<f64>) -> f64 {
        let w = self.as_vector();
        w.dot(&(sigma * &w))
    }

    /// Two-column CSV: `asset_id,weight`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["asset_id", "weight"])?;
        for (id, w) in self.asset_ids.iter().zip(&self.weights) {
            wtr.write_record([id.as_str(), &w.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

fn min_max_eigen(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    (min, max)
}

/// Ratio of extreme eigenvalues; infinite unless positive definite.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let (min, max) = min_max_eigen(m);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn check_square(m: &DMatrix<f64>) -> Result<usize> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("covariance has non-finite entries".into()));
    }
    Ok(n)
}

/// Solve `Σ x = rhs` for a well-conditioned positive definite Σ.
pub(crate) fn pd_solve(sigma: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    check_square(sigma)?;
    let condition = condition_number(sigma);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularCovariance { condition });
    }
    let chol = sigma
        .clone()
        .cholesky()
        .ok_or(Error::SingularCovariance { condition })?;
    Ok(chol.solve(rhs))
}

/// `s = Σ⁻¹1` and `S = 1ᵀs`.
pub(crate) fn inverse_ones(sigma: &DMatrix<f64>) -> Result<(DVector<f64>, f64)> {
    let s = pd_solve(sigma, &DVector::from_element(sigma.nrows(), 1.0))?;
    let total = s.sum();
    Ok((s, total))
}

/// Unconstrained minimum-variance weights `w = Σ⁻¹1 / 1ᵀΣ⁻¹1` on a raw matrix.
pub(crate) fn closed_form_weights(sigma: &DMatrix<f64>) -> Result<DVector<f64>> {
    let (s, total) = inverse_ones(sigma)?;
    Ok(s / total)
}

/// `‖2Σw − λ1‖∞` with `λ = 2wᵀΣw`, the multiplier of the budget constraint.
fn budget_stationarity(sigma: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    let g = sigma * w * 2.0;
    let lambda = w.dot(&g);
    g.map(|v| v - lambda).amax()
}

/// Closed-form minimum-variance weights; may be negative.
pub fn min_variance_closed_form(sigma: &MultiscaleCovariance) -> Result<PortfolioWeights> {
    let w = closed_form_weights(&sigma.matrix)?;
    Ok(PortfolioWeights {
        asset_ids: sigma.asset_ids.clone(),
        kkt_residual: Some(budget_stationarity(&sigma.matrix, &w)),
        weights: w.iter().copied().collect(),
        method: Method::MinVar,
        long_only: false,
        provenance: Provenance::of(sigma),
    })
}

/// Rescale to unit maximum diagonal and regularise if (near) singular.
///
/// The tiny Tikhonov term selects the minimum-norm point among tied optima.
fn normalised_hessian(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let n = sigma.nrows();
    let scale = (0..n).map(|i| sigma[(i, i)]).fold(0.0f64, f64::max);
    let mut g = if scale > 0.0 {
        sigma / scale
    } else {
        DMatrix::identity(n, n)
    };
    if !(condition_number(&g) <= MAX_CONDITION) {
        let eps = 1e-10 * (g.trace() / n as f64).max(1e-300);
        for i in 0..n {
            g[(i, i)] += eps;
        }
    }
    g
}

fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut a = DVector::zeros(n);
    a[i] = 1.0;
    a
}

fn bounds(n: usize) -> Vec<Constraint> {
    (0..n).map(|i| Constraint { a: unit(n, i), b: 0.0 }).collect()
}

fn max_iterations(n: usize) -> usize {
    100 + 20 * n
}

fn run_qp(qp: &Qp, x0: DVector<f64>) -> Result<QpSolution> {
    qp::solve(qp, x0, max_iterations(qp.g.nrows())).map_err(
        |QpFailure {
             best,
             iterations,
             kkt_residual,
         }| {
            Error::MaxIterations {
                iterations,
                kkt_residual,
                best: best.iter().copied().collect(),
            }
        },
    )
}

/// Zero active bounds exactly, clear round-off negatives and renormalise.
fn clean_simplex(x: &DVector<f64>, active: &[usize]) -> Vec<f64> {
    let n = x.len();
    let mut w: Vec<f64> = (0..n)
        .map(|i| if active.contains(&i) { 0.0 } else { x[i].max(0.0) })
        .collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

fn long_only_weights(sigma: &DMatrix<f64>) -> Result<(Vec<f64>, f64)> {
    let n = check_square(sigma)?;
    if let Ok(w) = closed_form_weights(sigma) {
        if w.iter().all(|&v| v >= 0.0) {
            return Ok((w.iter().copied().collect(), budget_stationarity(sigma, &w)));
        }
    }
    let qp = Qp {
        g: normalised_hessian(sigma),
        c: DVector::zeros(n),
        eq: vec![Constraint {
            a: DVector::from_element(n, 1.0),
            b: 1.0,
        }],
        ineq: bounds(n),
    };
    let sol = run_qp(&qp, DVector::from_element(n, 1.0 / n as f64))?;
    Ok((clean_simplex(&sol.x, &sol.active), sol.kkt_residual))
}

/// Long-only minimum variance: min wᵀΣw s.t. 1ᵀw = 1, w ≥ 0.
///
/// Returns the closed form unchanged when it is already non-negative.
pub fn min_variance_long_only(sigma: &MultiscaleCovariance) -> Result<PortfolioWeights> {
    let (weights, residual) = long_only_weights(&sigma.matrix)?;
    Ok(PortfolioWeights {
        asset_ids: sigma.asset_ids.clone(),
        weights,
        method: Method::MinVar,
        long_only: true,
        provenance: Provenance::of(sigma),
        kkt_residual: Some(residual),
    })
}

/// Long-only minimum variance with `μᵀw ≥ mu_target`.
pub fn min_variance_with_return_floor(
    sigma: &MultiscaleCovariance,
    mu: &[f64],
    mu_target: f64,
) -> Result<PortfolioWeights> {
    let n = check_square(&sigma.matrix)?;
    if mu.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} expected returns for {n} assets",
            mu.len()
        )));
    }
    if !mu_target.is_finite() || mu.iter().any(|m| !m.is_finite()) {
        return Err(Error::InvalidParameter("non-finite expected return".into()));
    }
    let max = mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if mu_target > max {
        return Err(Error::Infeasible { target: mu_target, max });
    }
    let out = |weights: Vec<f64>, residual: f64| PortfolioWeights {
        asset_ids: sigma.asset_ids.clone(),
        weights,
        method: Method::MinVar,
        long_only: true,
        provenance: Provenance::of(sigma),
        kkt_residual: Some(residual),
    };

    let (base, residual) = long_only_weights(&sigma.matrix)?;
    if base.iter().zip(mu).map(|(w, m)| w * m).sum::<f64>() >= mu_target {
        return Ok(out(base, residual));
    }

    let top: Vec<usize> = (0..n).filter(|&i| mu[i] == max).collect();
    if mu_target >= max {
        // Only portfolios of the top-return assets are feasible.
        let sub = DMatrix::from_fn(top.len(), top.len(), |a, b| sigma.matrix[(top[a], top[b])]);
        let (w_sub, residual) = long_only_weights(&sub)?;
        let mut w = vec![0.0; n];
        for (&i, v) in top.iter().zip(w_sub) {
            w[i] = v;
        }
        return Ok(out(w, residual));
    }

    let mu_scale = mu.iter().fold(0.0f64, |a, m| a.max(m.abs()));
    let mut ineq = bounds(n);
    ineq.push(Constraint {
        a: DVector::from_iterator(n, mu.iter().map(|m| m / mu_scale)),
        b: mu_target / mu_scale,
    });
    let qp = Qp {
        g: normalised_hessian(&sigma.matrix),
        c: DVector::zeros(n),
        eq: vec![Constraint {
            a: DVector::from_element(n, 1.0),
            b: 1.0,
        }],
        ineq,
    };
    // Feasible start on the segment from uniform to the best asset.
    let mean = mu.iter().sum::<f64>() / n as f64;
    let k = top[0];
    let t = ((mu_target - mean) / (max - mean)).clamp(0.0, 1.0);
    let mut x0 = DVector::from_element(n, (1.0 - t) / n as f64);
    x0[k] += t;
    let sol = run_qp(&qp, x0)?;
    let active: Vec<usize> = sol.active.iter().copied().filter(|&i| i < n).collect();
    Ok(out(clean_simplex(&sol.x, &active), sol.kkt_residual))
}

/// Tangency portfolio maximising (μ − r_f)ᵀw / √(wᵀΣw) with 1ᵀw = 1.
///
/// Long-only problems are solved as min yᵀΣy s.t. (μ − r_f)ᵀy = 1, y ≥ 0,
/// then w = y / 1ᵀy.
pub fn max_sharpe(
    sigma: &MultiscaleCovariance,
    mu: &[f64],
    risk_free: f64,
    long_only: bool,
) -> Result<PortfolioWeights> {
    let n = check_square(&sigma.matrix)?;
    if mu.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} expected returns for {n} assets",
            mu.len()
        )));
    }
    let excess: Vec<f64> = mu.iter().map(|m| m - risk_free).collect();
    if !excess.iter().any(|&e| e > 0.0) {
        return Err(Error::NoPositiveExcessReturn);
    }
    let out = |weights: Vec<f64>, residual: f64, long_only: bool| PortfolioWeights {
        asset_ids: sigma.asset_ids.clone(),
        weights,
        method: Method::MaxSharpe,
        long_only,
        provenance: Provenance::of(sigma),
        kkt_residual: Some(residual),
    };
    let e = DVector::from_column_slice(&excess);

    match pd_solve(&sigma.matrix, &e) {
        Ok(y) => {
            let total = y.sum();
            let scale = y.amax();
            if total > 1e-12 * scale && (!long_only || y.iter().all(|&v| v >= 0.0)) {
                let w = &y / total;
                // Stationarity of the homogenised problem: 2Σy = νe.
                let g = &sigma.matrix * &y * 2.0;
                let nu = g.dot(&y) / e.dot(&y);
                let residual = (&g - &e * nu).amax() / g.amax();
                return Ok(out(w.iter().copied().collect(), residual, long_only));
            }
            if !long_only {
                return Err(Error::DegenerateTangency);
            }
        }
        Err(err) if !long_only => return Err(err),
        Err(_) => {}
    }

    let e_scale = e.amax();
    let e_hat = &e / e_scale;
    let qp = Qp {
        g: normalised_hessian(&sigma.matrix),
        c: DVector::zeros(n),
        eq: vec![Constraint {
            a: e_hat.clone(),
            b: 1.0,
        }],
        ineq: bounds(n),
    };
    let total = e_hat.sum();
    let x0 = if total > 0.0 {
        DVector::from_element(n, 1.0 / total)
    } else {
        let positive = e_hat.iter().filter(|&&v| v > 0.0).count() as f64;
        e_hat.map(|v| if v > 0.0 { 1.0 / (positive * v) } else { 0.0 })
    };
    let sol = run_qp(&qp, x0)?;
    Ok(out(clean_simplex(&sol.x, &sol.active), sol.kkt_residual, true))
}

/// Element-wise mean of per-scale weights, renormalised to sum to one.
pub fn average_weights_across_scales(per_scale: &[PortfolioWeights]) -> Result<PortfolioWeights> {
    let first = per_scale
        .first()
        .ok_or_else(|| Error::InvalidParameter("no weight vectors to average".into()))?;
    if per_scale
        .iter()
        .any(|p| p.asset_ids != first.asset_ids || p.weights.len() != first.weights.len())
    {
        return Err(Error::UniverseMismatch);
    }
    let n = first.weights.len();
    let k = per_scale.len() as f64;
    let mut w: Vec<f64> = (0..n)
        .map(|i| per_scale.iter().map(|p| p.weights[i]).sum::<f64>() / k)
        .collect();
    let total: f64 = w.iter().sum();
    if !(total.abs() > 1e-300) {
        return Err(Error::InvalidParameter("averaged weights sum to zero".into()));
    }
    for v in &mut w {
        *v /= total;
    }
    let mut scales: Vec<usize> = per_scale
        .iter()
        .flat_map(|p| p.provenance.scales.iter().copied())
        .collect();
    scales.sort_unstable();
    scales.dedup();
    Ok(PortfolioWeights {
        asset_ids: first.asset_ids.clone(),
        weights: w,
        method: Method::Averaged,
        long_only: per_scale.iter().all(|p| p.long_only),
        provenance: Provenance {
            scales,
            covariance_method: first.provenance.covariance_method,
            aggregation: first.provenance.aggregation,
        },
        kkt_residual: None,
    })
}
