//! Per-scale covariance estimation and the multiscale aggregate
//! Σ^MS = ⟨Σ(Δt)/Δt⟩.
//!
//! Per-scale matrices are kept in raw per-period units (variance of a Δt-day
//! return); division by Δt happens only when they are aggregated.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;
use crate::timeseries::{estimation_panels, Aggregation, ReturnPanel};

/// Relative eigenvalue tolerance under which a matrix counts as PSD.
const PSD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovMethod {
    /// Mean-centred sample covariance.
    #[default]
    Product,
    /// ρ_ij · D_i · D_j with D the mean absolute deviation about the median.
    L1,
    /// ρ_ij · ⟨|r_i − med_i| |r_j − med_j|⟩, deviations averaged jointly.
    L1Joint,
}

impl std::str::FromStr for CovMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "product" => Ok(CovMethod::Product),
            "l1" => Ok(CovMethod::L1),
            "l1-joint" | "l1_joint" | "l1joint" => Ok(CovMethod::L1Joint),
            other => Err(Error::InvalidParameter(format!("unknown covariance method `{other}`"))),
        }
    }
}

/// Covariance estimate at one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleCovariance {
    pub scale: usize,
    #[serde(with = "matrix_serde")]
    pub matrix: DMatrix<f64>,
    /// Rows in the shortest panel that entered the estimate.
    pub sample_count: usize,
    /// Assets with zero dispersion in at least one panel; their rows and
    /// columns were zeroed in that panel.
    pub degenerate: Vec<usize>,
}

fn panel_covariance(columns: &[Vec<f64>], method: CovMethod, degenerate: &mut Vec<usize>) -> DMatrix<f64> {
    let n = columns.len();
    let mut m = DMatrix::zeros(n, n);
    match method {
        CovMethod::Product => {
            for i in 0..n {
                for j in 0..=i {
                    let c = stats::sample_cov(&columns[i], &columns[j]);
                    m[(i, j)] = c;
                    m[(j, i)] = c;
                }
                if m[(i, i)] <= 0.0 && !degenerate.contains(&i) {
                    degenerate.push(i);
                }
            }
        }
        CovMethod::L1 | CovMethod::L1Joint => {
            let medians: Vec<f64> = columns.iter().map(|c| stats::median(c)).collect();
            let devs: Vec<Vec<f64>> = columns
                .iter()
                .zip(&medians)
                .map(|(c, med)| c.iter().map(|x| (x - med).abs()).collect())
                .collect();
            let mad: Vec<f64> = devs.iter().map(|d| stats::mean(d)).collect();
            for i in 0..n {
                if mad[i] <= 0.0 {
                    if !degenerate.contains(&i) {
                        degenerate.push(i);
                    }
                    continue;
                }
                for j in 0..=i {
                    if mad[j] <= 0.0 {
                        continue;
                    }
                    let rho = if i == j {
                        1.0
                    } else {
                        stats::pearson(&columns[i], &columns[j]).unwrap_or(0.0)
                    };
                    let scale = match method {
                        CovMethod::L1 => mad[i] * mad[j],
                        _ => devs[i].iter().zip(&devs[j]).map(|(a, b)| a * b).sum::<f64>() / devs[i].len() as f64,
                    };
                    m[(i, j)] = rho * scale;
                    m[(j, i)] = rho * scale;
                }
            }
        }
    }
    m
}

/// Covariance of Δt-day returns.
///
/// Non-overlapping aggregation estimates one matrix per phase panel and
/// averages them; overlapping aggregation uses a single sliding-window panel.
pub fn cov_at_scale(
    base: &ReturnPanel,
    dt: usize,
    method: CovMethod,
    aggregation: Aggregation,
) -> Result<ScaleCovariance> {
    let panels = estimation_panels(base, dt, aggregation)?;
    let n = base.n_assets();
    let mut acc = DMatrix::zeros(n, n);
    let mut degenerate = Vec::new();
    let mut sample_count = usize::MAX;
    for p in &panels {
        let columns: Vec<Vec<f64>> = (0..n).map(|c| p.column(c)).collect();
        acc += panel_covariance(&columns, method, &mut degenerate);
        sample_count = sample_count.min(p.len());
    }
    acc /= panels.len() as f64;
    degenerate.sort_unstable();
    Ok(ScaleCovariance {
        scale: dt,
        matrix: acc,
        sample_count,
        degenerate,
    })
}

/// Covariance matrices of one asset universe over a grid of scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledCovarianceSet {
    pub asset_ids: Vec<String>,
    pub method: CovMethod,
    pub aggregation: Aggregation,
    pub entries: Vec<ScaleCovariance>,
}

impl ScaledCovarianceSet {
    /// Estimate Σ(Δt) for every scale, in the order given.
    pub fn estimate(base: &ReturnPanel, scales: &[usize], method: CovMethod, aggregation: Aggregation) -> Result<Self> {
        if scales.is_empty() {
            return Err(Error::InvalidParameter("empty scale grid".into()));
        }
        let entries = scales
            .iter()
            .map(|&dt| cov_at_scale(base, dt, method, aggregation))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            asset_ids: base.asset_ids.clone(),
            method,
            aggregation,
            entries,
        })
    }

    /// Wrap known matrices, e.g. exact population covariances in tests.
    pub fn from_matrices(asset_ids: Vec<String>, matrices: Vec<(usize, DMatrix<f64>)>) -> Result<Self> {
        let n = asset_ids.len();
        for (dt, m) in &matrices {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "matrix at scale {dt} is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(Self {
            asset_ids,
            method: CovMethod::Product,
            aggregation: Aggregation::NonOverlapping,
            entries: matrices
                .into_iter()
                .map(|(scale, matrix)| ScaleCovariance {
                    scale,
                    matrix,
                    sample_count: usize::MAX,
                    degenerate: Vec::new(),
                })
                .collect(),
        })
    }

    pub fn scales(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.scale).collect()
    }

    pub fn get(&self, dt: usize) -> Option<&DMatrix<f64>> {
        self.entries.iter().find(|e| e.scale == dt).map(|e| &e.matrix)
    }

    /// Correlation matrix ρ_ij(Δt) at one scale.
    pub fn correlation(&self, dt: usize) -> Option<DMatrix<f64>> {
        self.get(dt).map(correlation_from_covariance)
    }
}

/// ρ_ij = Σ_ij / √(Σ_ii Σ_jj); zero where a variance vanishes.
pub fn correlation_from_covariance(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let d = (m[(i, i)] * m[(j, j)]).sqrt();
        if i == j {
            1.0
        } else if d > 0.0 {
            m[(i, j)] / d
        } else {
            0.0
        }
    })
}

/// How per-scale matrices are combined.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleWeights {
    /// (1/K) Σ_k Σ(Δt_k)/Δt_k.
    #[default]
    Equal,
    /// Σ_k c_k Σ(Δt_k)/Δt_k with the given c_k, applied as given.
    Custom(Vec<f64>),
    /// Σ_k Σ(Δt_k): unnormalised sum of per-period variances over scales.
    RawSum,
}

/// Aggregated multiscale covariance in per-day units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiscaleCovariance {
    pub asset_ids: Vec<String>,
    #[serde(with = "matrix_serde")]
    pub matrix: DMatrix<f64>,
    pub scales: Vec<usize>,
    pub method: CovMethod,
    pub aggregation: Aggregation,
    /// Coefficient applied to each Σ(Δt) (already including any 1/Δt factor).
    pub scale_weights: Vec<f64>,
    pub psd_repaired: bool,
    pub ridge: f64,
}

impl MultiscaleCovariance {
    /// Treat a single matrix as an already aggregated covariance.
    pub fn from_matrix(asset_ids: Vec<String>, matrix: DMatrix<f64>) -> Self {
        Self {
            asset_ids,
            matrix,
            scales: vec![1],
            method: CovMethod::Product,
            aggregation: Aggregation::NonOverlapping,
            scale_weights: vec![1.0],
            psd_repaired: false,
            ridge: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `1e-8 · trace / N`.
pub fn default_ridge(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    1e-8 * m.trace() / m.nrows() as f64
}

/// Σ^MS = (1/K) Σ_k Σ(Δt_k)/Δt_k, plus `ridge`·I, PSD-repaired if needed.
pub fn multiscale_cov(set: &ScaledCovarianceSet, ridge: f64) -> Result<MultiscaleCovariance> {
    multiscale_cov_weighted(set, &ScaleWeights::Equal, ridge)
}

pub fn multiscale_cov_weighted(
    set: &ScaledCovarianceSet,
    weights: &ScaleWeights,
    ridge: f64,
) -> Result<MultiscaleCovariance> {
    if set.entries.is_empty() {
        return Err(Error::InvalidParameter("empty covariance set".into()));
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidParameter(format!("ridge {ridge} must be non-negative")));
    }
    let n = set.asset_ids.len();
    for e in &set.entries {
        if e.matrix.nrows() != n || e.matrix.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "scale {} matrix is {}x{}, expected {n}x{n}",
                e.scale,
                e.matrix.nrows(),
                e.matrix.ncols()
            )));
        }
    }
    let k = set.entries.len();
    let coefficients: Vec<f64> = match weights {
        ScaleWeights::Equal => set.entries.iter().map(|e| 1.0 / (k as f64 * e.scale as f64)).collect(),
        ScaleWeights::Custom(c) => {
            if c.len() != k {
                return Err(Error::DimensionMismatch(format!(
                    "{} scale weights for {k} scales",
                    c.len()
                )));
            }
            set.entries.iter().zip(c).map(|(e, w)| w / e.scale as f64).collect()
        }
        ScaleWeights::RawSum => vec![1.0; k],
    };
    let mut acc = DMatrix::zeros(n, n);
    match weights {
        // Divide before averaging so a single Δt = 1 matrix passes through unchanged.
        ScaleWeights::Equal => {
            for e in &set.entries {
                acc += &e.matrix / e.scale as f64;
            }
            acc /= k as f64;
        }
        _ => {
            for (e, c) in set.entries.iter().zip(&coefficients) {
                acc += &e.matrix * *c;
            }
        }
    }
    for i in 0..n {
        acc[(i, i)] += ridge;
    }
    let (matrix, psd_repaired) = psd_repair(&acc);
    Ok(MultiscaleCovariance {
        asset_ids: set.asset_ids.clone(),
        matrix,
        scales: set.scales(),
        method: set.method,
        aggregation: set.aggregation,
        scale_weights: coefficients,
        psd_repaired,
        ridge,
    })
}

/// Clip negative eigenvalues of a symmetric matrix to zero.
///
/// Returns the input unchanged (and `false`) when its smallest eigenvalue is
/// within `1e-12` of zero relative to the largest magnitude.
pub fn psd_repair(m: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    if m.nrows() == 0 {
        return (m.clone(), false);
    }
    let eig = SymmetricEigen::new(m.clone());
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min >= -PSD_TOL * max_abs {
        return (m.clone(), false);
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let v = &eig.eigenvectors;
    let rebuilt = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    let sym = (&rebuilt + rebuilt.transpose()) * 0.5;
    (sym, true)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Row-major CSV with a header of asset ids and the asset id leading each row.
pub fn write_matrix_csv<W: Write>(asset_ids: &[String], m: &DMatrix<f64>, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["asset".to_string()];
    header.extend(asset_ids.iter().cloned());
    wtr.write_record(&header)?;
    for (i, id) in asset_ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(m.row(i).iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Serialise matrices as nested row arrays.
pub(crate) mod matrix_serde {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(serde::de::Error::custom("ragged matrix"));
        }
        Ok(DMatrix::from_fn(n, k, |i, j| rows[i][j]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn panel(cols: &[Vec<f64>]) -> ReturnPanel {
        ReturnPanel::from_columns(synth::asset_names(cols.len()), cols).unwrap()
    }

    fn assert_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) {
        assert!((a - b).amax() <= tol, "{a} vs {b}");
    }

    #[test]
    fn identical_columns_share_the_sample_variance() {
        let x = vec![0.1, -0.2, 0.05, 0.3, -0.1, 0.0];
        let c = cov_at_scale(
            &panel(&[x.clone(), x.clone()]),
            1,
            CovMethod::Product,
            Aggregation::NonOverlapping,
        )
        .unwrap();
        let var = stats::sample_cov(&x, &x);
        for v in c.matrix.iter() {
            assert!((v - var).abs() < 1e-15);
        }
        assert_eq!(c.sample_count, 6);
    }

    #[test]
    fn l1_hand_example() {
        let c = cov_at_scale(
            &panel(&[vec![-1.0, 1.0, -1.0, 1.0]]),
            1,
            CovMethod::L1,
            Aggregation::NonOverlapping,
        )
        .unwrap();
        assert_eq!(c.matrix[(0, 0)], 1.0);
    }

    #[test]
    fn degenerate_asset_is_flagged_and_zeroed() {
        let x = vec![0.1, -0.2, 0.05, 0.3, -0.1];
        let flat = vec![0.01; 5];
        for method in [CovMethod::Product, CovMethod::L1, CovMethod::L1Joint] {
            let c = cov_at_scale(
                &panel(&[x.clone(), flat.clone()]),
                1,
                method,
                Aggregation::NonOverlapping,
            )
            .unwrap();
            assert_eq!(c.degenerate, vec![1]);
            assert_eq!(c.matrix[(1, 1)], 0.0);
            assert_eq!(c.matrix[(0, 1)].abs(), 0.0);
        }
    }

    #[test]
    fn scale_too_large_is_rejected() {
        let x = vec![0.0; 20];
        assert!(matches!(
            cov_at_scale(&panel(&[x]), 5, CovMethod::Product, Aggregation::NonOverlapping),
            Err(Error::ScaleTooLarge { .. })
        ));
    }

    #[test]
    fn multiscale_identity_aggregations() {
        let ids = synth::asset_names(2);
        let s1 = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let single = ScaledCovarianceSet::from_matrices(ids.clone(), vec![(1, s1.clone())]).unwrap();
        let ms = multiscale_cov(&single, 0.0).unwrap();
        assert_eq!(ms.matrix, s1);
        assert!(!ms.psd_repaired);

        let brownian = ScaledCovarianceSet::from_matrices(
            ids.clone(),
            [1usize, 2, 5].iter().map(|&d| (d, &s1 * d as f64)).collect(),
        )
        .unwrap();
        assert_close(&multiscale_cov(&brownian, 0.0).unwrap().matrix, &s1, 1e-15);

        let id = DMatrix::<f64>::identity(2, 2);
        let set = ScaledCovarianceSet::from_matrices(ids, vec![(1, id.clone()), (2, &id * 4.0)]).unwrap();
        assert_eq!(multiscale_cov(&set, 0.0).unwrap().matrix, &id * 1.5);
    }

    #[test]
    fn weighting_variants() {
        let ids = synth::asset_names(1);
        let set = ScaledCovarianceSet::from_matrices(
            ids,
            vec![
                (1, DMatrix::from_element(1, 1, 1.0)),
                (4, DMatrix::from_element(1, 1, 8.0)),
            ],
        )
        .unwrap();
        let raw = multiscale_cov_weighted(&set, &ScaleWeights::RawSum, 0.0).unwrap();
        assert_eq!(raw.matrix[(0, 0)], 9.0);
        let custom = multiscale_cov_weighted(&set, &ScaleWeights::Custom(vec![0.0, 1.0]), 0.0).unwrap();
        assert_eq!(custom.matrix[(0, 0)], 2.0);
        assert!(multiscale_cov_weighted(&set, &ScaleWeights::Custom(vec![1.0]), 0.0).is_err());
        let ridged = multiscale_cov(&set, 0.5).unwrap();
        assert_eq!(ridged.matrix[(0, 0)], 2.0);
    }

    #[test]
    fn dimension_mismatch() {
        let set = ScaledCovarianceSet {
            asset_ids: synth::asset_names(2),
            method: CovMethod::Product,
            aggregation: Aggregation::NonOverlapping,
            entries: vec![ScaleCovariance {
                scale: 1,
                matrix: DMatrix::identity(3, 3),
                sample_count: 10,
                degenerate: vec![],
            }],
        };
        assert!(matches!(multiscale_cov(&set, 0.0), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn psd_repair_examples() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(psd_repair(&id), (id.clone(), false));

        let d = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1]);
        let (r, changed) = psd_repair(&d);
        assert!(changed);
        assert_close(&r, &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]), 1e-15);

        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let (r, _) = psd_repair(&m);
        assert_close(&r, &DMatrix::from_element(2, 2, 1.5), 1e-14);
    }

    #[test]
    fn matrix_csv_layout() {
        let mut buf = Vec::new();
        let ids = vec!["X".to_string(), "Y".to_string()];
        write_matrix_csv(&ids, &DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "asset,X,Y\nX,1,0.5\nY,0.5,2\n");
    }

    #[test]
    fn iid_pair_recovers_correlation() {
        let target = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let p = synth::gen_correlated(1 << 14, &target, 77).unwrap();
        let c = cov_at_scale(&p, 1, CovMethod::Product, Aggregation::NonOverlapping).unwrap();
        assert!((c.matrix[(0, 1)] - 0.5).abs() < 0.05);
    }

    #[test]
    fn phase_averaged_covariance_scales_linearly_on_iid_data() {
        let target = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let p = synth::gen_correlated(1 << 14, &target, 78).unwrap();
        let c1 = cov_at_scale(&p, 1, CovMethod::Product, Aggregation::NonOverlapping).unwrap();
        for dt in [2, 5, 10, 21] {
            let c = cov_at_scale(&p, dt, CovMethod::Product, Aggregation::NonOverlapping).unwrap();
            for i in 0..2 {
                let rel = c.matrix[(i, i)] / (dt as f64 * c1.matrix[(i, i)]) - 1.0;
                assert!(rel.abs() < 0.10, "dt {dt} asset {i}: {rel}");
            }
        }
    }

    #[test]
    fn l1_and_product_share_correlation_structure() {
        let target = DMatrix::from_row_slice(3, 3, &[1.0, 0.6, 0.3, 0.6, 2.0, 0.4, 0.3, 0.4, 0.5]);
        let p = synth::gen_correlated(1 << 14, &target, 79).unwrap();
        let prod = cov_at_scale(&p, 1, CovMethod::Product, Aggregation::NonOverlapping)
            .unwrap()
            .matrix;
        let l1 = cov_at_scale(&p, 1, CovMethod::L1, Aggregation::NonOverlapping)
            .unwrap()
            .matrix;
        let ratios = [
            l1[(0, 1)] / prod[(0, 1)],
            l1[(0, 2)] / prod[(0, 2)],
            l1[(1, 2)] / prod[(1, 2)],
        ];
        let mean = ratios.iter().sum::<f64>() / 3.0;
        for r in ratios {
            assert!((r / mean - 1.0).abs() < 0.10);
        }
        // Gaussian: D = σ √(2/π), so Σ^{L1} ≈ (2/π) Σ.
        assert!((mean - 2.0 / std::f64::consts::PI).abs() < 0.03);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn sym(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
            prop::collection::vec(-2.0f64..2.0, n * n).prop_map(move |v| {
                let a = DMatrix::from_vec(n, n, v);
                (&a + a.transpose()) * 0.5
            })
        }

        proptest! {
            #[test]
            fn repair_is_idempotent_and_psd(m in sym(4)) {
                let (once, _) = psd_repair(&m);
                let (twice, changed) = psd_repair(&once);
                prop_assert!(!changed);
                prop_assert_eq!(&once, &twice);
                let scale = once.amax().max(1e-300);
                prop_assert!(min_eigenvalue(&once) >= -1e-10 * scale);
            }

            #[test]
            fn multiscale_is_linear(c in 0.1f64..10.0, m in sym(3)) {
                let (base, _) = psd_repair(&(&m * m.transpose()));
                let ids = synth::asset_names(3);
                let mats: Vec<(usize, DMatrix<f64>)> = [1usize, 2, 5].iter().map(|&d| (d, &base * (d as f64).powf(1.2))).collect();
                let scaled: Vec<(usize, DMatrix<f64>)> = mats.iter().map(|(d, m)| (*d, m * c)).collect();
                let a = multiscale_cov(&ScaledCovarianceSet::from_matrices(ids.clone(), mats).unwrap(), 0.0).unwrap();
                let b = multiscale_cov(&ScaledCovarianceSet::from_matrices(ids, scaled).unwrap(), 0.0).unwrap();
                let tol = 1e-12 * (a.matrix.amax() * c).max(1e-300);
                prop_assert!((&a.matrix * c - &b.matrix).amax() <= tol);
            }
        }
    }
}
