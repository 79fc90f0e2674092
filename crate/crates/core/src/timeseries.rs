//! Price ingestion, log returns and scale-Δt aggregation.
//!
//! Log returns are additive, so a return over Δt days is the plain sum of Δt
//! consecutive daily log returns. Aggregated panels keep the timestamp of the
//! last base row in each window.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of aggregated observations needed to estimate a moment or
/// covariance at a given scale.
pub const MIN_OBSERVATIONS: usize = 4;

const DATE_FORMAT: &str = "%Y-%m-%d";

/// Aligned prices, one column per asset, rows sorted by date.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    asset_ids: Vec<String>,
    dates: Vec<NaiveDate>,
    prices: DMatrix<f64>,
}

impl PriceSeries {
    pub fn new(asset_ids: Vec<String>, dates: Vec<NaiveDate>, prices: DMatrix<f64>) -> Result<Self> {
        if prices.nrows() != dates.len() || prices.ncols() != asset_ids.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} dates x {} assets vs price matrix {}x{}",
                dates.len(),
                asset_ids.len(),
                prices.nrows(),
                prices.ncols()
            )));
        }
        for w in dates.windows(2).enumerate() {
            let (i, pair) = w;
            if pair[1] <= pair[0] {
                return Err(Error::DuplicateDate {
                    line: i + 3,
                    date: pair[1].format(DATE_FORMAT).to_string(),
                });
            }
        }
        for r in 0..prices.nrows() {
            for c in 0..prices.ncols() {
                let v = prices[(r, c)];
                if v.is_nan() {
                    return Err(Error::MissingValue {
                        line: r + 2,
                        column: asset_ids[c].clone(),
                    });
                }
                if v <= 0.0 || !v.is_finite() {
                    return Err(Error::NonPositivePrice {
                        line: r + 2,
                        column: asset_ids[c].clone(),
                        value: v,
                    });
                }
            }
        }
        Ok(Self {
            asset_ids,
            dates,
            prices,
        })
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    /// Time × asset price matrix.
    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Price column of one asset.
    pub fn column(&self, asset: &str) -> Result<Vec<f64>> {
        let idx = asset_index(&self.asset_ids, asset)?;
        Ok(self.prices.column(idx).iter().copied().collect())
    }

    /// Rebuild prices from a base return panel by cumulative exponentiation
    /// from `start_price`. The first price is dated one trading day before the
    /// first return.
    pub fn from_returns(panel: &ReturnPanel, start_price: f64) -> Result<Self> {
        if panel.scale != 1 {
            return Err(Error::InvalidParameter(
                "prices can only be rebuilt from a base (scale 1) panel".into(),
            ));
        }
        let t = panel.len();
        let n = panel.n_assets();
        let mut prices = DMatrix::zeros(t + 1, n);
        for c in 0..n {
            let mut log_p = start_price.ln();
            prices[(0, c)] = start_price;
            for r in 0..t {
                log_p += panel.returns[(r, c)];
                prices[(r + 1, c)] = log_p.exp();
            }
        }
        let mut dates = Vec::with_capacity(t + 1);
        let first = panel.timestamps.first().copied().unwrap_or_else(default_start_date);
        dates.push(previous_trading_day(first));
        dates.extend_from_slice(&panel.timestamps);
        PriceSeries::new(panel.asset_ids.clone(), dates, prices)
    }
}

/// How a panel was built from daily returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PanelKind {
    Base,
    Overlapping,
    NonOverlapping { phase: usize },
}

/// Aggregation scheme for scale-Δt returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Sliding windows `[t, t+Δt)` for every start `t`.
    Overlapping,
    /// Disjoint windows, phase-averaged over every start offset.
    #[default]
    NonOverlapping,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "overlapping" => Ok(Aggregation::Overlapping),
            "nonoverlapping" | "non-overlapping" | "non_overlapping" => Ok(Aggregation::NonOverlapping),
            other => Err(Error::InvalidParameter(format!("unknown aggregation `{other}`"))),
        }
    }
}

/// Multi-asset log returns at a single scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    pub asset_ids: Vec<String>,
    pub timestamps: Vec<NaiveDate>,
    /// Time × asset.
    pub returns: DMatrix<f64>,
    /// Δt in trading days.
    pub scale: usize,
    pub kind: PanelKind,
}

impl ReturnPanel {
    /// A base (scale 1) panel.
    pub fn base(asset_ids: Vec<String>, timestamps: Vec<NaiveDate>, returns: DMatrix<f64>) -> Result<Self> {
        if returns.nrows() != timestamps.len() || returns.ncols() != asset_ids.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} timestamps x {} assets vs return matrix {}x{}",
                timestamps.len(),
                asset_ids.len(),
                returns.nrows(),
                returns.ncols()
            )));
        }
        Ok(Self {
            asset_ids,
            timestamps,
            returns,
            scale: 1,
            kind: PanelKind::Base,
        })
    }

    /// Base panel from columns with a synthetic weekday calendar starting
    /// 2000-01-04. Used by the generators and in tests.
    pub fn from_columns(asset_ids: Vec<String>, columns: &[Vec<f64>]) -> Result<Self> {
        let t = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != t) {
            return Err(Error::DimensionMismatch("columns differ in length".into()));
        }
        let returns = DMatrix::from_fn(t, columns.len(), |r, c| columns[c][r]);
        let days = trading_days(default_start_date(), t + 1);
        ReturnPanel::base(asset_ids, days[1..].to_vec(), returns)
    }

    pub fn len(&self) -> usize {
        self.returns.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.nrows() == 0
    }

    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }

    pub fn asset_index(&self, asset: &str) -> Result<usize> {
        asset_index(&self.asset_ids, asset)
    }

    pub fn column(&self, idx: usize) -> Vec<f64> {
        self.returns.column(idx).iter().copied().collect()
    }

    /// Rows `[start, end)` as a new base panel. Panics if the panel is not a
    /// base panel or the range is out of bounds.
    pub fn slice_rows(&self, start: usize, end: usize) -> ReturnPanel {
        assert_eq!(self.scale, 1, "slice_rows on aggregated panel");
        ReturnPanel {
            asset_ids: self.asset_ids.clone(),
            timestamps: self.timestamps[start..end].to_vec(),
            returns: self.returns.rows(start, end - start).into_owned(),
            scale: 1,
            kind: PanelKind::Base,
        }
    }

    /// Per-asset arithmetic mean of the returns.
    pub fn mean_returns(&self) -> Vec<f64> {
        (0..self.n_assets())
            .map(|c| self.returns.column(c).iter().sum::<f64>() / self.len() as f64)
            .collect()
    }
}

fn asset_index(ids: &[String], asset: &str) -> Result<usize> {
    ids.iter()
        .position(|a| a == asset)
        .ok_or_else(|| Error::UnknownAsset(asset.to_string()))
}

pub(crate) fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date")
}

fn is_weekend(d: NaiveDate) -> bool {
    matches!(d.weekday(), Weekday::Sat | Weekday::Sun)
}

/// `n` consecutive weekdays starting at `start` (rolled forward if it falls on a weekend).
pub fn trading_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !is_weekend(d) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

fn previous_trading_day(d: NaiveDate) -> NaiveDate {
    let mut p = d - Duration::days(1);
    while is_weekend(p) {
        p -= Duration::days(1);
    }
    p
}

/// Load a price CSV: header `date,<asset>,...`, ISO-8601 dates, one column
/// per asset. Rows are sorted by date on load.
pub fn load_prices(path: impl AsRef<Path>) -> Result<PriceSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_prices(file)
}

pub fn read_prices<R: Read>(reader: R) -> Result<PriceSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            column: headers.get(0).unwrap_or("").to_string(),
            message: "header needs a date column and at least one asset".into(),
        });
    }
    let asset_ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let date_col = headers.get(0).unwrap_or("date").to_string();

    // (line, date, prices)
    let mut rows: Vec<(usize, NaiveDate, Vec<f64>)> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                line,
                column: date_col.clone(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let date_str = &record[0];
        let date = NaiveDate::parse_from_str(date_str, DATE_FORMAT).map_err(|e| Error::Parse {
            line,
            column: date_col.clone(),
            message: format!("bad date `{date_str}`: {e}"),
        })?;
        let mut values = Vec::with_capacity(asset_ids.len());
        for (c, cell) in record.iter().skip(1).enumerate() {
            let column = &asset_ids[c];
            if cell.is_empty() || cell.eq_ignore_ascii_case("nan") || cell.eq_ignore_ascii_case("na") {
                return Err(Error::MissingValue {
                    line,
                    column: column.clone(),
                });
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                column: column.clone(),
                message: format!("not a number: `{cell}`"),
            })?;
            if v.is_nan() {
                return Err(Error::MissingValue {
                    line,
                    column: column.clone(),
                });
            }
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::NonPositivePrice {
                    line,
                    column: column.clone(),
                    value: v,
                });
            }
            values.push(v);
        }
        rows.push((line, date, values));
    }

    rows.sort_by_key(|r| r.1);
    for pair in rows.windows(2) {
        if pair[0].1 == pair[1].1 {
            let line = pair[0].0.max(pair[1].0);
            return Err(Error::DuplicateDate {
                line,
                date: pair[1].1.format(DATE_FORMAT).to_string(),
            });
        }
    }

    let dates: Vec<NaiveDate> = rows.iter().map(|r| r.1).collect();
    let prices = DMatrix::from_fn(rows.len(), asset_ids.len(), |r, c| rows[r].2[c]);
    PriceSeries::new(asset_ids, dates, prices)
}

/// Write prices in the format [`read_prices`] accepts. Values use the
/// shortest round-trip representation so a reload is bit-exact.
pub fn write_prices<W: Write>(series: &PriceSeries, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string()];
    header.extend(series.asset_ids.iter().cloned());
    wtr.write_record(&header)?;
    for (r, d) in series.dates.iter().enumerate() {
        let mut rec = vec![d.format(DATE_FORMAT).to_string()];
        rec.extend(series.prices.row(r).iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Daily log returns `ln(p[t+1] / p[t])`.
pub fn to_log_returns(prices: &PriceSeries) -> Result<ReturnPanel> {
    let t = prices.len();
    if t < 2 {
        return Err(Error::TooShort { needed: 2, got: t });
    }
    let p = &prices.prices;
    let returns = DMatrix::from_fn(t - 1, p.ncols(), |r, c| (p[(r + 1, c)] / p[(r, c)]).ln());
    ReturnPanel::base(prices.asset_ids.clone(), prices.dates[1..].to_vec(), returns)
}

/// Number of rows in the shortest phase panel of a non-overlapping
/// aggregation at scale `dt` (the phase `dt - 1` panel).
pub fn min_phase_rows(len: usize, dt: usize) -> usize {
    if dt == 0 || len + 1 < dt {
        return 0;
    }
    (len + 1 - dt) / dt
}

/// Rows produced by an aggregation of `len` base rows at scale `dt`.
pub fn aggregated_rows(len: usize, dt: usize, aggregation: Aggregation) -> usize {
    match aggregation {
        Aggregation::Overlapping => (len + 1).saturating_sub(dt),
        Aggregation::NonOverlapping => min_phase_rows(len, dt),
    }
}

/// Check that scale `dt` leaves at least [`MIN_OBSERVATIONS`] rows in every
/// panel used for estimation. Returns that row count.
pub fn ensure_estimable(len: usize, dt: usize, aggregation: Aggregation) -> Result<usize> {
    if dt == 0 {
        return Err(Error::InvalidParameter("scale must be at least 1".into()));
    }
    let rows = aggregated_rows(len, dt, aggregation);
    if rows < MIN_OBSERVATIONS {
        return Err(Error::ScaleTooLarge {
            scale: dt,
            len,
            reason: "fewer than 4 aggregated observations",
        });
    }
    Ok(rows)
}

/// Sum `dt` consecutive base returns into scale-`dt` returns.
///
/// Non-overlapping row `k` covers base rows `[phase + k·dt, phase + (k+1)·dt)`;
/// overlapping row `t` covers `[t, t+dt)` and `phase` is ignored.
pub fn aggregate(base: &ReturnPanel, dt: usize, aggregation: Aggregation, phase: usize) -> Result<ReturnPanel> {
    if base.scale != 1 {
        return Err(Error::InvalidParameter(format!(
            "aggregation needs a base panel, got scale {}",
            base.scale
        )));
    }
    if dt == 0 {
        return Err(Error::InvalidParameter("scale must be at least 1".into()));
    }
    let t = base.len();
    let n = base.n_assets();
    let window_sum = |start: usize, c: usize| -> f64 {
        let mut s = 0.0;
        for r in start..start + dt {
            s += base.returns[(r, c)];
        }
        s
    };
    match aggregation {
        Aggregation::Overlapping => {
            if dt > t {
                return Err(Error::ScaleTooLarge {
                    scale: dt,
                    len: t,
                    reason: "window longer than the series",
                });
            }
            let rows = t - dt + 1;
            let returns = DMatrix::from_fn(rows, n, window_sum);
            let timestamps = (0..rows).map(|r| base.timestamps[r + dt - 1]).collect();
            Ok(ReturnPanel {
                asset_ids: base.asset_ids.clone(),
                timestamps,
                returns,
                scale: dt,
                kind: if dt == 1 {
                    PanelKind::Base
                } else {
                    PanelKind::Overlapping
                },
            })
        }
        Aggregation::NonOverlapping => {
            if phase >= dt {
                return Err(Error::BadPhase { phase, scale: dt });
            }
            let rows = t.saturating_sub(phase) / dt;
            if rows == 0 {
                return Err(Error::ScaleTooLarge {
                    scale: dt,
                    len: t,
                    reason: "no complete window after the phase offset",
                });
            }
            let returns = DMatrix::from_fn(rows, n, |r, c| window_sum(phase + r * dt, c));
            let timestamps = (0..rows).map(|r| base.timestamps[phase + (r + 1) * dt - 1]).collect();
            Ok(ReturnPanel {
                asset_ids: base.asset_ids.clone(),
                timestamps,
                returns,
                scale: dt,
                kind: if dt == 1 {
                    PanelKind::Base
                } else {
                    PanelKind::NonOverlapping { phase }
                },
            })
        }
    }
}

/// The `dt` non-overlapping panels for phases `0..dt`.
pub fn all_phase_aggregates(base: &ReturnPanel, dt: usize) -> Result<Vec<ReturnPanel>> {
    if dt == 0 {
        return Err(Error::InvalidParameter("scale must be at least 1".into()));
    }
    (0..dt)
        .map(|phase| aggregate(base, dt, Aggregation::NonOverlapping, phase))
        .collect()
}

/// Panels used to estimate a statistic at scale `dt`: every phase panel for
/// non-overlapping aggregation, a single sliding-window panel otherwise.
pub fn estimation_panels(base: &ReturnPanel, dt: usize, aggregation: Aggregation) -> Result<Vec<ReturnPanel>> {
    ensure_estimable(base.len(), dt, aggregation)?;
    match aggregation {
        Aggregation::NonOverlapping => all_phase_aggregates(base, dt),
        Aggregation::Overlapping => Ok(vec![aggregate(base, dt, Aggregation::Overlapping, 0)?]),
    }
}
