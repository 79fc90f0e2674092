use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use multiscale::covariance::CovMethod;
use multiscale::timeseries::Aggregation;

#[derive(Debug, Parser)]
#[command(
    name = "multiscale",
    version,
    about = "Multiscale covariance estimation, scaling analysis, portfolio optimisation and backtests",
    after_help = "Exit codes: 0 ok, 1 usage, 2 data error, 3 numerical failure.\n\
                  Relative output paths resolve against --out-dir, else $MULTISCALE_OUT_DIR, else the working directory."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic price panel and write it as CSV.
    #[command(args_override_self = true)]
    Simulate(SimulateArgs),
    /// Estimate scaling exponents, spectra and the multiscale covariance of a price file.
    #[command(args_override_self = true)]
    Estimate(EstimateArgs),
    /// Solve a minimum-variance or maximum-Sharpe allocation on a price file.
    #[command(args_override_self = true)]
    Optimize(OptimizeArgs),
    /// Walk-forward backtest of one or more strategies on a price file.
    #[command(args_override_self = true)]
    Backtest(BacktestArgs),
    /// Simulate the reference regime-switching panel and run the whole pipeline on it.
    #[command(args_override_self = true)]
    Repro(ReproArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Read flags from a key=value file (one per line, `#` comments); command-line flags take precedence
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Directory for output files [default: $MULTISCALE_OUT_DIR or .]
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

fn parse_cov(s: &str) -> Result<CovMethod, String> {
    s.parse().map_err(|e: multiscale::Error| e.to_string())
}

fn parse_aggregation(s: &str) -> Result<Aggregation, String> {
    s.parse().map_err(|e: multiscale::Error| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct ScaleArgs {
    /// Comma-separated aggregation scales in trading days
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_value = "1,2,5,10,21")]
    pub scales: Vec<usize>,

    /// Covariance estimator: product, l1 or l1-joint
    #[arg(long = "cov", value_name = "METHOD", value_parser = parse_cov, default_value = "product")]
    pub cov: CovMethod,

    /// How returns are aggregated to coarser scales: nonoverlapping or overlapping
    #[arg(long, value_parser = parse_aggregation, default_value = "nonoverlapping")]
    pub aggregation: Aggregation,

    /// Ridge added to the diagonal of the multiscale covariance [default: 1e-8 * trace / N]
    #[arg(long)]
    pub ridge: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Gaussian,
    Fgn,
    Correlated,
    Epps,
    Regime,
    Cascade,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Generator: gaussian, fgn, correlated, epps, regime or cascade
    #[arg(long, value_enum)]
    pub kind: Kind,

    /// Number of daily returns (prices written: n + 1); fgn and cascade need a power of two
    #[arg(long, default_value_t = 1024)]
    pub n: usize,

    /// Random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Daily volatility (gaussian, fgn, epps, cascade)
    #[arg(long, default_value_t = 0.01)]
    pub sigma: f64,

    /// Hurst exponent (fgn)
    #[arg(long, default_value_t = 0.5)]
    pub hurst: f64,

    /// Daily covariance matrix, rows separated by `;` and entries by `,` (correlated)
    #[arg(long, value_name = "ROWS")]
    pub cov_matrix: Option<String>,

    /// Long-horizon correlation (epps)
    #[arg(long, default_value_t = 0.6)]
    pub rho_inf: f64,

    /// Correlation scaling exponent (epps)
    #[arg(long, default_value_t = 0.3)]
    pub h_rho: f64,

    /// Comma-separated calm-regime volatilities, one per asset (regime)
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_value = "0.01")]
    pub sigma_low: Vec<f64>,

    /// Comma-separated stressed-regime volatilities, one per asset (regime)
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_value = "0.03")]
    pub sigma_high: Vec<f64>,

    /// Pairwise correlation of the shocks (regime)
    #[arg(long, default_value_t = 0.0)]
    pub correlation: f64,

    /// Comma-separated days at which the regime toggles (regime)
    #[arg(long, value_delimiter = ',', action = ArgAction::Set)]
    pub switch_points: Vec<usize>,

    /// Lognormal intermittency lambda^2, in (0, 0.5) (cascade)
    #[arg(long, default_value_t = 0.05)]
    pub intermittency: f64,

    /// Hurst exponent of the underlying noise (cascade)
    #[arg(long, default_value_t = 0.5)]
    pub h_base: f64,

    /// Output price CSV
    #[arg(long, value_name = "FILE", default_value = "prices.csv")]
    pub out: PathBuf,

    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpectrumKind {
    /// Structure functions over the aggregation scales
    Sf,
    /// Multifractal detrended fluctuation analysis
    Mfdfa,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    /// Input price CSV (header `date,<asset>,...`)
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,

    #[command(flatten)]
    pub scale: ScaleArgs,

    /// Comma-separated nonzero moment orders q
    #[arg(
        long,
        value_delimiter = ',',
        action = ArgAction::Set,
        allow_hyphen_values = true,
        default_value = "-4,-3,-2,-1,1,2,3,4"
    )]
    pub q_grid: Vec<f64>,

    /// Spectrum estimator: sf or mfdfa
    #[arg(long, value_enum, default_value = "sf")]
    pub method: SpectrumKind,

    /// Polynomial detrending order for mfdfa
    #[arg(long, default_value_t = 1)]
    pub detrend_order: usize,

    /// Comma-separated mfdfa segment sizes [default: log-spaced from 16 to n/4]
    #[arg(long, value_delimiter = ',', action = ArgAction::Set)]
    pub mfdfa_scales: Vec<usize>,

    /// Also fit correlation scaling for every asset pair
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true", action = ArgAction::Set)]
    pub pairs: bool,

    /// JSON report
    #[arg(long, value_name = "FILE", default_value = "scaling.json")]
    pub report: PathBuf,

    /// Multiscale covariance CSV
    #[arg(long, value_name = "FILE", default_value = "covariance.csv")]
    pub cov_out: PathBuf,

    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Objective {
    /// Minimum variance
    Minvar,
    /// Maximum Sharpe ratio
    Maxsharpe,
    /// Average of the per-scale minimum-variance weights
    Averaged,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    /// Input price CSV (header `date,<asset>,...`)
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,

    #[command(flatten)]
    pub scale: ScaleArgs,

    /// Objective: minvar, maxsharpe or averaged
    #[arg(long, value_enum, default_value = "minvar")]
    pub objective: Objective,

    /// Forbid short positions
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true", action = ArgAction::Set)]
    pub long_only: bool,

    /// Minimum daily expected return (minvar only; implies --long-only)
    #[arg(long, allow_hyphen_values = true)]
    pub mu_target: Option<f64>,

    /// Daily risk-free rate (maxsharpe)
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub risk_free: f64,

    /// Daily volatility of the target curve std(dt) = sigma * dt^H; enables the per-scale check
    #[arg(long, requires = "target_h")]
    pub target_sigma: Option<f64>,

    /// Exponent H of the target curve
    #[arg(long, requires = "target_sigma")]
    pub target_h: Option<f64>,

    /// Add closed-form weight sensitivities to variances and Hurst exponents to the report
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true", action = ArgAction::Set)]
    pub sensitivity: bool,

    /// Weights CSV
    #[arg(long, value_name = "FILE", default_value = "weights.csv")]
    pub weights_out: PathBuf,

    /// JSON report
    #[arg(long, value_name = "FILE", default_value = "optimize.json")]
    pub report: PathBuf,

    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    EqualWeight,
    MarkowitzDaily,
    MarkowitzMultiscale,
    MaxSharpeDaily,
    MaxSharpeMultiscale,
}

#[derive(Debug, Clone, Args)]
pub struct BacktestArgs {
    /// Input price CSV (header `date,<asset>,...`)
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,

    #[command(flatten)]
    pub scale: ScaleArgs,

    /// Comma-separated strategies [default: equal weight, daily, multiscale, multiscale overlapping]
    #[arg(long, value_enum, value_delimiter = ',', action = ArgAction::Set)]
    pub strategy: Vec<StrategyArg>,

    /// Estimation window in trading days
    #[arg(long, default_value_t = 125)]
    pub lookback: usize,

    /// Trading days between rebalances
    #[arg(long, default_value_t = 21)]
    pub rebalance: usize,

    /// Daily risk-free rate for the max-Sharpe strategies
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub risk_free: f64,

    /// JSON report with the configuration echoed first
    #[arg(long, value_name = "FILE", default_value = "backtest.json")]
    pub report: PathBuf,

    /// Metrics CSV, one row per strategy
    #[arg(long, value_name = "FILE", default_value = "metrics.csv")]
    pub metrics_out: PathBuf,

    /// Equity curves CSV, one column per strategy
    #[arg(long, value_name = "FILE", default_value = "equity.csv")]
    pub equity_out: PathBuf,

    /// Rebalance weights CSV in long format
    #[arg(long, value_name = "FILE", default_value = "weights.csv")]
    pub weights_out: PathBuf,

    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct ReproArgs {
    /// Random seed of the simulated panel
    #[arg(long, default_value_t = multiscale::repro::DEFAULT_SEED)]
    pub seed: u64,

    /// JSON summary
    #[arg(long, value_name = "FILE", default_value = "repro.json")]
    pub report: PathBuf,

    /// Plain-text summary
    #[arg(long, value_name = "FILE", default_value = "repro.txt")]
    pub summary: PathBuf,

    /// Simulated price CSV
    #[arg(long, value_name = "FILE", default_value = "repro_prices.csv")]
    pub prices_out: PathBuf,

    #[command(flatten)]
    pub common: Common,
}
