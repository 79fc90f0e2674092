use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// Variants fall into two families that the CLI maps onto different exit
/// codes: data problems (bad input files, panels too short for the requested
/// scales) and numerical problems (singular matrices, infeasible programs,
/// solver non-convergence). See [`Error::is_numerical`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error at line {line}, column `{column}`: {message}")]
    Parse {
        line: usize,
        column: String,
        message: String,
    },

    #[error("missing value at line {line}, column `{column}`")]
    MissingValue { line: usize, column: String },

    #[error("non-positive price {value} at line {line}, column `{column}`")]
    NonPositivePrice { line: usize, column: String, value: f64 },

    #[error("duplicate date {date} at line {line}")]
    DuplicateDate { line: usize, date: String },

    #[error("series too short: need at least {needed} rows, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("scale {scale} too large for {len} base observations ({reason})")]
    ScaleTooLarge {
        scale: usize,
        len: usize,
        reason: &'static str,
    },

    #[error("phase {phase} out of range for scale {scale}")]
    BadPhase { phase: usize, scale: usize },

    #[error("unknown asset `{0}`")]
    UnknownAsset(String),

    #[error("all returns of asset `{asset}` are zero; moments vanish")]
    ZeroMoment { asset: String },

    #[error("need at least {needed} points for a scaling fit, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("non-positive moment {moment} at scale {scale}")]
    NonPositiveMoment { scale: f64, moment: f64 },

    #[error("series of length {len} too short for MF-DFA scale {max_scale} (need {needed})")]
    SeriesTooShort {
        len: usize,
        max_scale: usize,
        needed: usize,
    },

    #[error("every MF-DFA segment has zero residual variance")]
    DegenerateSegments,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("covariance matrix is singular (condition number {condition:.3e})")]
    SingularCovariance { condition: f64 },

    #[error("active-set solver hit {iterations} iterations (KKT residual {kkt_residual:.3e})")]
    MaxIterations {
        iterations: usize,
        kkt_residual: f64,
        best: Vec<f64>,
    },

    #[error("return floor {target} is infeasible (largest expected return {max})")]
    Infeasible { target: f64, max: f64 },

    #[error("no asset has positive expected excess return")]
    NoPositiveExcessReturn,

    #[error("tangency portfolio cannot be normalised to a unit budget")]
    DegenerateTangency,

    #[error("asset universes differ between weight vectors")]
    UniverseMismatch,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not positive semidefinite (pivot {pivot:.3e} at index {index})")]
    NotPsd { index: usize, pivot: f64 },

    #[error("fGn synthesis failed: circulant embedding has negative eigenvalue {min_eigenvalue:.3e} and n={n} is too large for the Cholesky fallback")]
    EmbeddingFailure { n: usize, min_eigenvalue: f64 },

    #[error("Epps calibration cannot reach (rho_inf={rho_inf}, H_rho={h_rho}); nearest achievable H_rho is {nearest_h_rho:.4}")]
    CalibrationFailure {
        rho_inf: f64,
        h_rho: f64,
        nearest_h_rho: f64,
    },

    #[error("bad schedule: {0}")]
    BadSchedule(String),

    #[error("cascade length {n} is not a power of two with depth >= 4")]
    BadDepth { n: usize },

    #[error("panel of {len} rows too short for lookback {lookback} + rebalance {rebalance}")]
    PanelTooShort {
        len: usize,
        lookback: usize,
        rebalance: usize,
    },

    #[error("equity curve has zero volatility; Sharpe ratio undefined")]
    ZeroVolatility,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical machinery rather than of the input data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularCovariance { .. }
                | Error::MaxIterations { .. }
                | Error::Infeasible { .. }
                | Error::NoPositiveExcessReturn
                | Error::DegenerateTangency
                | Error::NotPsd { .. }
                | Error::EmbeddingFailure { .. }
                | Error::CalibrationFailure { .. }
                | Error::DegenerateSegments
                | Error::ZeroVolatility
                | Error::ZeroMoment { .. }
                | Error::NonPositiveMoment { .. }
        )
    }
}
