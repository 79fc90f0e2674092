//! Synthetic return generators with known scaling properties.
//!
//! Every generator is a pure function of its parameters and a 64-bit seed.
//! Generators that need several independent streams derive them with
//! [`derive_seed`], so batch runs can be split across threads without changing
//! any output.

use std::f64::consts::{LN_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scaling::{fit_scaling_exponent, DEFAULT_SCALES};
use crate::timeseries::ReturnPanel;

/// Largest length for which the exact Cholesky fallback is attempted.
pub const CHOLESKY_FALLBACK_MAX: usize = 1 << 10;

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th independent stream under `seed`:
/// `mix64(seed + (index + 1) · 0x9E3779B97F4A7C15)`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn single_panel(name: &str, values: Vec<f64>) -> Result<ReturnPanel> {
    ReturnPanel::from_columns(vec![name.to_string()], &[values])
}

/// Default asset names `A1, A2, …`.
pub fn asset_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("A{i}")).collect()
}

fn check_length(n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(Error::InvalidParameter(format!("length {n} below minimum {min}")));
    }
    Ok(())
}

/// iid N(0, σ²) daily returns.
pub fn gen_gaussian_iid(n: usize, sigma_daily: f64, seed: u64) -> Result<ReturnPanel> {
    check_length(n, 16)?;
    let mut r = rng(seed);
    let x = normals(&mut r, n).into_iter().map(|z| z * sigma_daily).collect();
    single_panel("A1", x)
}

/// Autocovariance of fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(k: usize, hurst: f64, sigma: f64) -> f64 {
    let k = k as f64;
    let h2 = 2.0 * hurst;
    0.5 * sigma * sigma * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

/// Fractional Gaussian noise samples (no panel wrapper).
pub fn fgn_series(n: usize, hurst: f64, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "Hurst exponent {hurst} outside (0, 1)"
        )));
    }
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "fGn length {n} must be a power of two"
        )));
    }
    match circulant_fgn(n, hurst, sigma, seed) {
        Ok(x) => Ok(x),
        Err(min_eigenvalue) if n <= CHOLESKY_FALLBACK_MAX => {
            cholesky_fgn(n, hurst, sigma, seed).map_err(|_| Error::EmbeddingFailure { n, min_eigenvalue })
        }
        Err(min_eigenvalue) => Err(Error::EmbeddingFailure { n, min_eigenvalue }),
    }
}

/// Davies–Harte circulant embedding. Returns the most negative eigenvalue on failure.
fn circulant_fgn(n: usize, hurst: f64, sigma: f64, seed: u64) -> std::result::Result<Vec<f64>, f64> {
    let m = 2 * n;
    let mut c: Vec<Complex64> = (0..m)
        .map(|k| {
            let lag = if k <= n { k } else { m - k };
            Complex64::new(fgn_autocovariance(lag, hurst, sigma), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut c);
    let max = c.iter().map(|z| z.re).fold(0.0, f64::max);
    let min = c.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    if min < -1e-10 * max {
        return Err(min);
    }
    let mut r = rng(seed);
    let mut w: Vec<Complex64> = c
        .iter()
        .map(|lam| {
            let amp = (lam.re.max(0.0) / m as f64).sqrt();
            let re: f64 = r.sample(StandardNormal);
            let im: f64 = r.sample(StandardNormal);
            Complex64::new(re * amp, im * amp)
        })
        .collect();
    fft.process(&mut w);
    Ok(w[..n].iter().map(|z| z.re).collect())
}

fn cholesky_fgn(n: usize, hurst: f64, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    let cov = DMatrix::from_fn(n, n, |i, j| fgn_autocovariance(i.abs_diff(j), hurst, sigma));
    let l = nalgebra::Cholesky::new(cov)
        .ok_or(Error::NotPsd {
            index: 0,
            pivot: f64::NAN,
        })?
        .unpack();
    let mut r = rng(seed);
    let z = nalgebra::DVector::from_vec(normals(&mut r, n));
    Ok((l * z).iter().copied().collect())
}

/// Fractional Gaussian noise with Hurst exponent `hurst`; `n` must be a power of two.
pub fn gen_fgn(n: usize, hurst: f64, sigma_daily: f64, seed: u64) -> Result<ReturnPanel> {
    single_panel("A1", fgn_series(n, hurst, sigma_daily, seed)?)
}

/// Lower-triangular `L` with `L Lᵀ = m` for symmetric positive semidefinite `m`.
///
/// Pivots within `1e-12 · max diag` of zero are treated as exact zeros, which
/// leaves the matching column of `L` empty; so rank-deficient inputs such as
/// `[[1, 1], [1, 1]]` factor exactly.
pub fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch("factor needs a square matrix".into()));
    }
    let scale = (0..n)
        .map(|i| m[(i, i)].abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::InvalidParameter("matrix is not symmetric".into()));
            }
        }
    }
    let tol = 1e-12 * scale;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol {
            return Err(Error::NotPsd { index: j, pivot: d });
        }
        if d <= tol {
            // Rows below must be consistent with a zero pivot.
            for i in j + 1..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if s.abs() > 1e-8 * scale {
                    return Err(Error::NotPsd { index: j, pivot: d });
                }
            }
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// iid multivariate normal rows with covariance `sigma`.
pub fn gen_correlated(n: usize, sigma: &DMatrix<f64>, seed: u64) -> Result<ReturnPanel> {
    check_length(n, 2)?;
    let l = psd_factor(sigma)?;
    let k = sigma.nrows();
    let mut r = rng(seed);
    let mut cols = vec![Vec::with_capacity(n); k];
    for _ in 0..n {
        let z = normals(&mut r, k);
        for i in 0..k {
            let mut s = 0.0;
            for j in 0..=i {
                s += l[(i, j)] * z[j];
            }
            cols[i].push(s);
        }
    }
    ReturnPanel::from_columns(asset_names(k), &cols)
}

/// Parameters of the two-asset lead-lag construction.
///
/// Asset 1 is `f_t + a·ε1_t`. Asset 2 is `y_t + a·ε2_t` with
/// `y_t = Σ_k (1−φ) φ^k f_{t−k}`, a geometric distributed lag of the same
/// factor. The noise level `a² = 1/ρ_∞ − 1` fixes the long-horizon
/// correlation; the decay φ sets how fast correlation builds with Δt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EppsParams {
    pub rho_inf: f64,
    pub decay: f64,
}

impl EppsParams {
    fn noise_var(&self) -> f64 {
        1.0 / self.rho_inf - 1.0
    }

    /// Exact correlation of Δt-aggregated returns for the stationary process.
    pub fn correlation_at(&self, dt: usize) -> f64 {
        let phi = self.decay;
        let a2 = self.noise_var();
        let d = dt as f64;
        let mut cov = 0.0;
        let mut kappa = 1.0 - phi;
        for m in 0..dt {
            cov += (d - m as f64) * kappa;
            kappa *= phi;
        }
        let gamma0 = (1.0 - phi) * (1.0 - phi) / (1.0 - phi * phi);
        let mut var_y = d * gamma0;
        let mut g = gamma0;
        for m in 1..dt {
            g *= phi;
            var_y += 2.0 * (d - m as f64) * g;
        }
        let var1 = d * (1.0 + a2);
        let var2 = var_y + d * a2;
        cov / (var1 * var2).sqrt()
    }

    /// Log-log slope of [`Self::correlation_at`] over `scales`.
    pub fn fitted_exponent(&self, scales: &[usize]) -> f64 {
        let pts: Vec<(f64, f64)> = scales.iter().map(|&s| (s as f64, self.correlation_at(s))).collect();
        fit_scaling_exponent(&pts).map(|f| f.exponent).unwrap_or(f64::NAN)
    }
}

const EPPS_MAX_DECAY: f64 = 0.999;

/// Solve for the decay that gives fitted exponent `h_rho` over `scales`.
///
/// The exponent is scanned on a grid of decays and refined by bisection in
/// the first bracketing interval. Targets outside the reachable range fail
/// with the closest reachable exponent.
pub fn calibrate_epps(rho_inf: f64, h_rho: f64, scales: &[usize]) -> Result<EppsParams> {
    if !(rho_inf > 0.0 && rho_inf <= 1.0) {
        return Err(Error::InvalidParameter(format!("rho_inf {rho_inf} outside (0, 1]")));
    }
    if !(h_rho > 0.0 && h_rho < 1.0) {
        return Err(Error::InvalidParameter(format!("H_rho {h_rho} outside (0, 1)")));
    }
    let exponent = |decay: f64| EppsParams { rho_inf, decay }.fitted_exponent(scales);
    let grid: Vec<f64> = (0..=400).map(|i| EPPS_MAX_DECAY * i as f64 / 400.0).collect();
    let values: Vec<f64> = grid.iter().map(|&d| exponent(d)).collect();
    for k in 0..grid.len() - 1 {
        let (f0, f1) = (values[k] - h_rho, values[k + 1] - h_rho);
        if f0 == 0.0 {
            return Ok(EppsParams {
                rho_inf,
                decay: grid[k],
            });
        }
        if f0 * f1 < 0.0 {
            let (mut lo, mut hi) = (grid[k], grid[k + 1]);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if (exponent(mid) - h_rho) * f0 > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(EppsParams {
                rho_inf,
                decay: 0.5 * (lo + hi),
            });
        }
    }
    let nearest = values
        .iter()
        .copied()
        .min_by(|a, b| (a - h_rho).abs().total_cmp(&(b - h_rho).abs()))
        .unwrap_or(f64::NAN);
    Err(Error::CalibrationFailure {
        rho_inf,
        h_rho,
        nearest_h_rho: nearest,
    })
}

/// Simulate the lead-lag pair for explicit parameters.
pub fn gen_epps_with_params(n: usize, params: EppsParams, sigma_daily: f64, seed: u64) -> Result<ReturnPanel> {
    check_length(n, 16)?;
    if !(params.decay >= 0.0 && params.decay < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "decay {} outside [0, 1)",
            params.decay
        )));
    }
    if !(params.rho_inf > 0.0 && params.rho_inf <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "rho_inf {} outside (0, 1]",
            params.rho_inf
        )));
    }
    let phi = params.decay;
    let a = params.noise_var().sqrt();
    let mut r = rng(seed);
    let var_y = (1.0 - phi) * (1.0 - phi) / (1.0 - phi * phi);
    let mut y = var_y.sqrt() * r.sample::<f64, _>(StandardNormal);
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    for _ in 0..n {
        let f: f64 = r.sample(StandardNormal);
        let e1: f64 = r.sample(StandardNormal);
        let e2: f64 = r.sample(StandardNormal);
        y = phi * y + (1.0 - phi) * f;
        x1.push(sigma_daily * (f + a * e1));
        x2.push(sigma_daily * (y + a * e2));
    }
    ReturnPanel::from_columns(asset_names(2), &[x1, x2])
}

/// Two assets whose correlation grows with horizon (Epps effect), calibrated
/// so ρ(Δt) fitted over the default scale grid has exponent `h_rho`.
pub fn gen_epps(n: usize, rho_inf: f64, h_rho: f64, sigma_daily: f64, seed: u64) -> Result<ReturnPanel> {
    let params = calibrate_epps(rho_inf, h_rho, &DEFAULT_SCALES)?;
    gen_epps_with_params(n, params, sigma_daily, seed)
}

fn regime_flags(n: usize, switch_points: &[usize]) -> Result<Vec<bool>> {
    if switch_points.iter().any(|&s| s >= n) {
        return Err(Error::BadSchedule(format!("switch point outside [0, {n})")));
    }
    if switch_points.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::BadSchedule("switch points must be strictly increasing".into()));
    }
    let mut high = false;
    let mut next = 0;
    Ok((0..n)
        .map(|t| {
            while next < switch_points.len() && switch_points[next] == t {
                high = !high;
                next += 1;
            }
            high
        })
        .collect())
}

/// iid Gaussian returns whose volatility starts at `sigma_low` and toggles
/// between the two levels at each switch point.
pub fn gen_regime_switch(
    n: usize,
    sigma_low: f64,
    sigma_high: f64,
    switch_points: &[usize],
    seed: u64,
) -> Result<ReturnPanel> {
    gen_regime_panel(
        &RegimePanelSpec {
            n,
            sigma_low: vec![sigma_low],
            sigma_high: vec![sigma_high],
            correlation: 0.0,
            switch_points: switch_points.to_vec(),
        },
        seed,
    )
}

/// Multi-asset regime-switching panel with equicorrelated Gaussian shocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimePanelSpec {
    pub n: usize,
    pub sigma_low: Vec<f64>,
    pub sigma_high: Vec<f64>,
    pub correlation: f64,
    pub switch_points: Vec<usize>,
}

pub fn gen_regime_panel(spec: &RegimePanelSpec, seed: u64) -> Result<ReturnPanel> {
    check_length(spec.n, 16)?;
    let k = spec.sigma_low.len();
    if k == 0 || spec.sigma_high.len() != k {
        return Err(Error::BadSchedule(
            "need one low and one high volatility per asset".into(),
        ));
    }
    for (lo, hi) in spec.sigma_low.iter().zip(&spec.sigma_high) {
        if !(*lo > 0.0 && lo < hi) {
            return Err(Error::BadSchedule(format!(
                "need 0 < sigma_low < sigma_high, got {lo} and {hi}"
            )));
        }
    }
    if !(0.0..1.0).contains(&spec.correlation) {
        return Err(Error::InvalidParameter("correlation must lie in [0, 1)".into()));
    }
    let flags = regime_flags(spec.n, &spec.switch_points)?;
    let mut r = rng(seed);
    let (a, b) = (spec.correlation.sqrt(), (1.0 - spec.correlation).sqrt());
    let mut cols = vec![Vec::with_capacity(spec.n); k];
    for &high in &flags {
        let common: f64 = if k > 1 { r.sample(StandardNormal) } else { 0.0 };
        for (i, col) in cols.iter_mut().enumerate() {
            let z: f64 = r.sample(StandardNormal);
            let shock = if k > 1 { a * common + b * z } else { z };
            let sigma = if high { spec.sigma_high[i] } else { spec.sigma_low[i] };
            col.push(sigma * shock);
        }
    }
    ReturnPanel::from_columns(asset_names(k), &cols)
}

/// Lognormal multiplicative-cascade volatility times fractional Gaussian noise.
///
/// The amplitude at day `t` is the product over levels `l = 1..=depth` of a
/// lognormal factor attached to the level-`l` dyadic interval containing `t`.
/// Each squared factor has log-variance `4·λ²·ln 2` and unit mean, so the total
/// log-variance is `λ² ln n` per amplitude and the expected variance is the
/// same at every scale.
pub fn gen_multifractal(n: usize, intermittency: f64, h_base: f64, sigma_daily: f64, seed: u64) -> Result<ReturnPanel> {
    if !n.is_power_of_two() || n < 16 {
        return Err(Error::BadDepth { n });
    }
    if !(intermittency > 0.0 && intermittency < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "intermittency {intermittency} outside (0, 0.5)"
        )));
    }
    let depth = n.trailing_zeros() as usize;
    let s2 = intermittency * LN_2;
    let s = s2.sqrt();
    let mut r = rng(derive_seed(seed, 0));
    let mut log_amp = vec![0.0; n];
    for l in 1..=depth {
        let nodes = 1usize << l;
        let factors: Vec<f64> = (0..nodes)
            .map(|_| -s2 + s * r.sample::<f64, _>(StandardNormal))
            .collect();
        let shift = depth - l;
        for (t, la) in log_amp.iter_mut().enumerate() {
            *la += factors[t >> shift];
        }
    }
    let noise = fgn_series(n, h_base, 1.0, derive_seed(seed, 1))?;
    let x = noise
        .iter()
        .zip(&log_amp)
        .map(|(z, la)| sigma_daily * la.exp() * z)
        .collect();
    single_panel("A1", x)
}

/// Symmetric α-stable iid returns (Chambers–Mallows–Stuck), used as a
/// fat-tail fixture where first absolute moments scale as Δt^{1/α}.
pub fn gen_stable_iid(n: usize, alpha: f64, scale: f64, seed: u64) -> Result<ReturnPanel> {
    check_length(n, 16)?;
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(Error::InvalidParameter(format!("stable index {alpha} outside (1, 2]")));
    }
    let mut r = rng(seed);
    let x = (0..n)
        .map(|_| {
            let v = PI * (r.random::<f64>() - 0.5);
            let w: f64 = r.sample(Exp1);
            let a = (alpha * v).sin() / v.cos().powf(1.0 / alpha);
            let b = (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha);
            scale * a * b
        })
        .collect();
    single_panel("A1", x)
}

/// Declarative description of one synthetic panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    GaussianIid {
        n: usize,
        sigma: f64,
        seed: u64,
    },
    Fgn {
        n: usize,
        hurst: f64,
        sigma: f64,
        seed: u64,
    },
    Correlated {
        n: usize,
        sigma_matrix: Vec<Vec<f64>>,
        seed: u64,
    },
    Epps {
        n: usize,
        rho_inf: f64,
        h_rho: f64,
        sigma: f64,
        seed: u64,
    },
    RegimeSwitch {
        #[serde(flatten)]
        spec: RegimePanelSpec,
        seed: u64,
    },
    Cascade {
        n: usize,
        intermittency: f64,
        h_base: f64,
        sigma: f64,
        seed: u64,
    },
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<ReturnPanel> {
        match self {
            GeneratorSpec::GaussianIid { n, sigma, seed } => gen_gaussian_iid(*n, *sigma, *seed),
            GeneratorSpec::Fgn { n, hurst, sigma, seed } => gen_fgn(*n, *hurst, *sigma, *seed),
            GeneratorSpec::Correlated { n, sigma_matrix, seed } => {
                let k = sigma_matrix.len();
                if sigma_matrix.iter().any(|row| row.len() != k) {
                    return Err(Error::DimensionMismatch("covariance rows differ in length".into()));
                }
                let m = DMatrix::from_fn(k, k, |i, j| sigma_matrix[i][j]);
                gen_correlated(*n, &m, *seed)
            }
            GeneratorSpec::Epps {
                n,
                rho_inf,
                h_rho,
                sigma,
                seed,
            } => gen_epps(*n, *rho_inf, *h_rho, *sigma, *seed),
            GeneratorSpec::RegimeSwitch { spec, seed } => gen_regime_panel(spec, *seed),
            GeneratorSpec::Cascade {
                n,
                intermittency,
                h_base,
                sigma,
                seed,
            } => gen_multifractal(*n, *intermittency, *h_base, *sigma, *seed),
        }
    }
}
