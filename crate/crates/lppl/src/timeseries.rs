//! Price and rate series ingestion, calendar alignment, and continuous
//! discounting.
//!
//! Prices are discounted by the risk-free rate with calendar-day compounding:
//! for each trading date `t` in the window,
//!
//! ```text
//! p(t) = p_obs(t) * prod_{s = t1+1 .. t} (1 + r_f(s))^(-1/365)
//! ```
//!
//! where the product runs over *calendar* days and non-trading days use the
//! most recent available rate. Prices themselves are never interpolated or
//! filled; the fit operates on integer trading-day indices.

use std::fmt;
use std::fs;
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from series construction, CSV ingestion, and discounting.
#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: parse failure at line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("non-positive price at line {line}: {value}")]
    NonPositivePrice { line: usize, value: f64 },
    #[error("rate at line {line} is {value}, below -100%")]
    RateBelowFloor { line: usize, value: f64 },
    #[error("duplicate date {date}")]
    DuplicateDate { date: NaiveDate },
    #[error("empty price series")]
    EmptyPriceSeries,
    #[error("empty rate series")]
    EmptyRateSeries,
    #[error("window [{t1}, {t2}] not covered by series range [{lo}, {hi}]")]
    UncoveredRange {
        t1: NaiveDate,
        t2: NaiveDate,
        lo: NaiveDate,
        hi: NaiveDate,
    },
    #[error("window [{t1}, {t2}] contains no trading days")]
    EmptyWindow { t1: NaiveDate, t2: NaiveDate },
    #[error("window length {length} exceeds series length {n}")]
    WindowTooLong { length: usize, n: usize },
    #[error("window step must be at least 1")]
    ZeroStep,
}

/// How rate values are quoted in the input file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RateUnits {
    /// Annualized percent, e.g. `4.0` means 4% per year. T-bill feeds
    /// are quoted this way, so it is the default.
    #[default]
    Percent,
    /// Decimal fraction per year, e.g. `0.04`.
    Decimal,
}

/// Which CSV columns hold the date and the value, and whether the first
/// row is a header.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub date_col: usize,
    pub value_col: usize,
    pub has_header: bool,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        Self {
            date_col: 0,
            value_col: 1,
            has_header: true,
        }
    }
}

/// Dated daily observations of an asset price.
///
/// Dates are strictly increasing, all values are positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
    label: String,
}

impl PriceSeries {
    /// Build a validated series. Rows are sorted by date; duplicate dates
    /// and non-positive values are rejected.
    pub fn new(
        label: impl Into<String>,
        dates: Vec<NaiveDate>,
        values: Vec<f64>,
    ) -> Result<Self, SeriesError> {
        if dates.is_empty() || dates.len() != values.len() {
            return Err(SeriesError::EmptyPriceSeries);
        }
        for (line, &v) in values.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SeriesError::NonPositivePrice {
                    line: line + 1,
                    value: v,
                });
            }
        }
        let (dates, values) = sort_by_date(dates, values)?;
        Ok(Self {
            dates,
            values,
            label: label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn first_date(&self) -> NaiveDate {
        self.dates[0]
    }

    pub fn last_date(&self) -> NaiveDate {
        *self.dates.last().unwrap()
    }

    /// Index of the first trading date `>= d`, if any.
    pub fn index_at_or_after(&self, d: NaiveDate) -> Option<usize> {
        match self.dates.binary_search(&d) {
            Ok(i) => Some(i),
            Err(i) if i < self.dates.len() => Some(i),
            Err(_) => None,
        }
    }

    /// Index of the last trading date `<= d`, if any.
    pub fn index_at_or_before(&self, d: NaiveDate) -> Option<usize> {
        match self.dates.binary_search(&d) {
            Ok(i) => Some(i),
            Err(0) => None,
            Err(i) => Some(i - 1),
        }
    }
}

/// Annualized risk-free rates as decimal fractions per year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSeries {
    dates: Vec<NaiveDate>,
    rates: Vec<f64>,
}

impl RateSeries {
    pub fn new(dates: Vec<NaiveDate>, rates: Vec<f64>) -> Result<Self, SeriesError> {
        if dates.is_empty() || dates.len() != rates.len() {
            return Err(SeriesError::EmptyRateSeries);
        }
        for (line, &r) in rates.iter().enumerate() {
            if !(r > -1.0) || !r.is_finite() {
                return Err(SeriesError::RateBelowFloor {
                    line: line + 1,
                    value: r,
                });
            }
        }
        let (dates, rates) = sort_by_date(dates, rates)?;
        Ok(Self { dates, rates })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Rate in force on calendar day `d`: the last observation at or before
    /// `d`. Days before the first observation fall back to the first rate;
    /// the returned flag is true in that case.
    pub fn rate_on(&self, d: NaiveDate) -> (f64, bool) {
        match self.dates.binary_search(&d) {
            Ok(i) => (self.rates[i], false),
            Err(0) => (self.rates[0], true),
            Err(i) => (self.rates[i - 1], false),
        }
    }
}

/// A discounted price window ready for fitting: trading dates, discounted
/// values, and integer trading-day indices `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscountedSeries {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
    t_index: Vec<usize>,
    /// True when the rate series starts after the window start, so the
    /// leading calendar days were filled from the first available rate.
    pub start_backfilled: bool,
}

impl DiscountedSeries {
    /// Wrap an already-discounted (or synthetic) window.
    pub fn from_values(dates: Vec<NaiveDate>, values: Vec<f64>) -> Self {
        let t_index = (0..dates.len()).collect();
        Self {
            dates,
            values,
            t_index,
            start_backfilled: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn t_index(&self) -> &[usize] {
        &self.t_index
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Replace the values, keeping dates and indices (bootstrap replicas).
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.len());
        Self {
            dates: self.dates.clone(),
            values,
            t_index: self.t_index.clone(),
            start_backfilled: self.start_backfilled,
        }
    }

    /// Map a real-valued trading-day index to a calendar date, rounding up
    /// to the next trading day. Indices beyond the window are extrapolated
    /// over weekdays from the last window date.
    pub fn index_to_date(&self, idx: f64) -> NaiveDate {
        index_to_date(&self.dates, idx)
    }
}

impl fmt::Display for DiscountedSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} trading days [{} .. {}]",
            self.len(),
            self.dates[0],
            self.dates[self.len() - 1]
        )
    }
}

fn sort_by_date(
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
) -> Result<(Vec<NaiveDate>, Vec<f64>), SeriesError> {
    let mut rows: Vec<(NaiveDate, f64)> = dates.into_iter().zip(values).collect();
    rows.sort_by_key(|(d, _)| *d);
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(SeriesError::DuplicateDate { date: w[0].0 });
        }
    }
    Ok(rows.into_iter().unzip())
}

fn split_csv_line(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

fn parse_date(field: &str, path: &str, line: usize) -> Result<NaiveDate, SeriesError> {
    NaiveDate::parse_from_str(field, "%Y-%m-%d").map_err(|e| SeriesError::Parse {
        path: path.to_string(),
        line,
        msg: format!("bad date {field:?}: {e}"),
    })
}

fn parse_value(field: &str, path: &str, line: usize) -> Result<f64, SeriesError> {
    field.parse::<f64>().map_err(|e| SeriesError::Parse {
        path: path.to_string(),
        line,
        msg: format!("bad number {field:?}: {e}"),
    })
}

fn read_rows(
    path: &Path,
    cols: &ColumnSpec,
) -> Result<Vec<(usize, NaiveDate, f64)>, SeriesError> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| SeriesError::Io {
        path: display.clone(),
        source,
    })?;
    let need = cols.date_col.max(cols.value_col) + 1;
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        // Outputs written by this toolkit embed metadata as '#' comments.
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        rows.push((i + 1, line));
    }
    let mut out = Vec::with_capacity(rows.len());
    let mut skipped_header = !cols.has_header;
    for (lineno, line) in rows {
        if !skipped_header {
            skipped_header = true;
            continue;
        }
        let fields = split_csv_line(line);
        if fields.len() < need {
            return Err(SeriesError::Parse {
                path: display.clone(),
                line: lineno,
                msg: format!("expected at least {need} columns, got {}", fields.len()),
            });
        }
        let date = parse_date(fields[cols.date_col], &display, lineno)?;
        let value = parse_value(fields[cols.value_col], &display, lineno)?;
        out.push((lineno, date, value));
    }
    Ok(out)
}

/// Load a two-column `(ISO date, price)` CSV into a validated
/// [`PriceSeries`]. Rows are sorted by date; `#` comment lines are skipped.
pub fn load_price_csv(
    path: impl AsRef<Path>,
    cols: &ColumnSpec,
    label: impl Into<String>,
) -> Result<PriceSeries, SeriesError> {
    let path = path.as_ref();
    let rows = read_rows(path, cols)?;
    if rows.is_empty() {
        return Err(SeriesError::EmptyPriceSeries);
    }
    let mut dates = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (lineno, date, value) in rows {
        if !(value > 0.0) {
            return Err(SeriesError::NonPositivePrice {
                line: lineno,
                value,
            });
        }
        dates.push(date);
        values.push(value);
    }
    PriceSeries::new(label, dates, values)
}

/// Load a `(ISO date, annualized rate)` CSV into a validated [`RateSeries`],
/// converting percent quotes to decimal fractions when `units` says so.
pub fn load_rate_csv(
    path: impl AsRef<Path>,
    cols: &ColumnSpec,
    units: RateUnits,
) -> Result<RateSeries, SeriesError> {
    let path = path.as_ref();
    let rows = read_rows(path, cols)?;
    if rows.is_empty() {
        return Err(SeriesError::EmptyRateSeries);
    }
    let mut dates = Vec::with_capacity(rows.len());
    let mut rates = Vec::with_capacity(rows.len());
    for (lineno, date, value) in rows {
        let r = match units {
            RateUnits::Percent => value / 100.0,
            RateUnits::Decimal => value,
        };
        if !(r > -1.0) {
            return Err(SeriesError::RateBelowFloor {
                line: lineno,
                value: r,
            });
        }
        dates.push(date);
        rates.push(r);
    }
    RateSeries::new(dates, rates)
}

/// Write a price series in the same CSV format `load_price_csv` ingests.
/// Extra metadata lines are emitted as leading `#` comments.
pub fn write_price_csv(
    path: impl AsRef<Path>,
    series: &PriceSeries,
    comments: &[String],
) -> std::io::Result<()> {
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str("date,price\n");
    for (d, v) in series.dates().iter().zip(series.values()) {
        out.push_str(&format!("{d},{v:.10}\n"));
    }
    fs::write(path, out)
}

/// Discount the price window `[t1, t2]` continuously by the risk-free rate,
/// compounding over calendar days at `(1 + r)^(-1/365)` per day. The first
/// trading day of the window keeps its observed price.
pub fn discount(
    prices: &PriceSeries,
    rates: &RateSeries,
    t1: NaiveDate,
    t2: NaiveDate,
) -> Result<DiscountedSeries, SeriesError> {
    if rates.is_empty() {
        return Err(SeriesError::EmptyRateSeries);
    }
    if t1 > t2 {
        return Err(SeriesError::EmptyWindow { t1, t2 });
    }
    if t1 < prices.first_date() || t2 > prices.last_date() {
        return Err(SeriesError::UncoveredRange {
            t1,
            t2,
            lo: prices.first_date(),
            hi: prices.last_date(),
        });
    }
    let i1 = prices
        .index_at_or_after(t1)
        .ok_or(SeriesError::EmptyWindow { t1, t2 })?;
    let i2 = prices
        .index_at_or_before(t2)
        .ok_or(SeriesError::EmptyWindow { t1, t2 })?;
    if i1 > i2 {
        return Err(SeriesError::EmptyWindow { t1, t2 });
    }

    let window_dates = &prices.dates()[i1..=i2];
    let window_values = &prices.values()[i1..=i2];
    let start = window_dates[0];

    let mut values = Vec::with_capacity(window_dates.len());
    let mut factor = 1.0_f64;
    let mut backfilled = false;
    let mut next = 0usize; // next trading date to emit
    let mut day = start;
    // p(t1) carries an empty product.
    values.push(window_values[0]);
    next += 1;
    while next < window_dates.len() {
        day = day.checked_add_days(Days::new(1)).expect("date overflow");
        let (r, bf) = rates.rate_on(day);
        backfilled |= bf;
        factor *= (1.0 + r).powf(-1.0 / 365.0);
        if day == window_dates[next] {
            values.push(window_values[next] * factor);
            next += 1;
        }
    }

    Ok(DiscountedSeries {
        dates: window_dates.to_vec(),
        values,
        t_index: (0..window_dates.len()).collect(),
        start_backfilled: backfilled,
    })
}

/// Accumulated growth factor `prod_{s=t1+1..t2} (1 + r_f(s))^(1/365)` over
/// calendar days; the inverse of the discount factor applied over `[t1, t2]`.
pub fn compound_factor(rates: &RateSeries, t1: NaiveDate, t2: NaiveDate) -> f64 {
    let mut factor = 1.0_f64;
    let mut day = t1;
    while day < t2 {
        day = day.checked_add_days(Days::new(1)).expect("date overflow");
        let (r, _) = rates.rate_on(day);
        factor *= (1.0 + r).powf(1.0 / 365.0);
    }
    factor
}

/// Overlapping fit windows of exactly `length` trading days whose starts are
/// `step` trading days apart. The trailing partial window is dropped.
pub fn rolling_windows(
    prices: &PriceSeries,
    length: usize,
    step: usize,
) -> Result<Vec<(NaiveDate, NaiveDate)>, SeriesError> {
    if step == 0 {
        return Err(SeriesError::ZeroStep);
    }
    let n = prices.len();
    if length == 0 || length > n {
        return Err(SeriesError::WindowTooLong { length, n });
    }
    let count = (n - length) / step + 1;
    let dates = prices.dates();
    Ok((0..count)
        .map(|k| {
            let s = k * step;
            (dates[s], dates[s + length - 1])
        })
        .collect())
}

/// Map a real-valued trading-day index on `dates` to a calendar date,
/// rounding up to the next trading day. Indices past the calendar are
/// extrapolated over weekdays (Mon-Fri) from the last date.
pub fn index_to_date(dates: &[NaiveDate], idx: f64) -> NaiveDate {
    let k = idx.ceil();
    if k < 0.0 {
        return dates[0];
    }
    let k = k as usize;
    if k < dates.len() {
        return dates[k];
    }
    let mut extra = k - (dates.len() - 1);
    let mut d = *dates.last().unwrap();
    while extra > 0 {
        d = d.checked_add_days(Days::new(1)).expect("date overflow");
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            extra -= 1;
        }
    }
    d
}

/// Consecutive weekday (Mon-Fri) dates starting at `start`, for synthetic
/// fixtures.
pub fn weekday_calendar(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut dates = Vec::with_capacity(n);
    let mut d = start;
    while dates.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            dates.push(d);
        }
        d = d.checked_add_days(Days::new(1)).expect("date overflow");
    }
    dates
}
