pub mod backtest;
pub mod covariance;
pub mod error;
pub mod optimizer;
pub mod repro;
pub mod scaling;
mod stats;
pub mod synth;
pub mod timeseries;

pub use error::{Error, Result};
