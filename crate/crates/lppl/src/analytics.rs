//! Post-fit economics: drawdown measurement, crash-ratio inference, bubble
//! fractions, and the rolling-window stationarity/LPPL census.

use chrono::{Months, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibrate::{self, FitResult};
use crate::model::{LpplParams, ModelSpec};
use crate::stats::StationarityResult;
use crate::timeseries::{compound_factor, discount, DiscountedSeries, PriceSeries, RateSeries, SeriesError};

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("window start {t1} is not inside the price series")]
    WindowStartMissing { t1: NaiveDate },
    #[error("insufficient post-peak data: need prices through {needed}, have through {have}")]
    InsufficientPostPeak { needed: NaiveDate, have: NaiveDate },
    #[error("spec {spec} has no fundamental price parameter")]
    NoFundamentalParam { spec: ModelSpec },
    #[error("date {at} is outside the fitted window")]
    DateOutsideWindow { at: NaiveDate },
    #[error("peak price does not exceed the compounded fundamental value; crash ratio undefined")]
    DegenerateDenominator,
    #[error("no full window of length {length} fits the series")]
    NoWindows { length: usize },
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Horizons for the peak/valley searches, in calendar months.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CrashConfig {
    /// Peak search extends this far beyond the fitted critical time.
    pub peak_horizon_months: u32,
    /// Valley search for the maximum drawdown extends this far past the
    /// peak.
    pub valley_horizon_months: u32,
}

impl Default for CrashConfig {
    fn default() -> Self {
        Self {
            peak_horizon_months: 6,
            valley_horizon_months: 12,
        }
    }
}

/// Drawdowns after the bubble peak and their crash ratios.
///
/// `kappa` is populated only for `gamma = 1` fits, where the crash ratio
/// estimates the crash-amplitude scale directly; the peak-to-valley ratio
/// is used. For `gamma < 1` the scale differs from the ratio and is not
/// inverted here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrashMetrics {
    pub t_p: NaiveDate,
    pub peak_price: f64,
    /// Drop from the peak over the following two calendar months.
    pub dd_2months: f64,
    /// Peak-to-valley drop within the valley horizon.
    pub dd_max: f64,
    pub rc_2months: f64,
    pub rc_max: f64,
    pub kappa: Option<f64>,
}

fn add_months_clamped(d: NaiveDate, months: u32) -> NaiveDate {
    d.checked_add_months(Months::new(months)).expect("date overflow")
}

/// Measure the post-peak drawdowns on the *undiscounted* price series and
/// the crash ratios `RC_i = DD_i / (p_obs(t_p) - p1 * growth(t1 -> t_p))`,
/// where the fitted fundamental `p1` (quoted in the discounted frame of
/// `t1`) is compounded forward by the risk-free rate.
pub fn crash_metrics(
    prices: &PriceSeries,
    rates: &RateSeries,
    fit: &FitResult,
    t1: NaiveDate,
    cfg: &CrashConfig,
) -> Result<CrashMetrics, AnalyticsError> {
    let i1 = prices
        .index_at_or_after(t1)
        .ok_or(AnalyticsError::WindowStartMissing { t1 })?;
    let window_dates = &prices.dates()[i1..];
    let window_values = &prices.values()[i1..];
    let t1 = window_dates[0];

    // Peak: the maximum observed price from the window start to shortly
    // after the fitted critical time.
    let t_c_date = crate::timeseries::index_to_date(window_dates, fit.params.t_c);
    let peak_end = add_months_clamped(t_c_date, cfg.peak_horizon_months);
    let mut ip = 0;
    for (i, d) in window_dates.iter().enumerate() {
        if *d > peak_end {
            break;
        }
        if window_values[i] > window_values[ip] {
            ip = i;
        }
    }
    let t_p = window_dates[ip];
    let peak_price = window_values[ip];

    let last = prices.last_date();
    let dd2_end = add_months_clamped(t_p, 2);
    if last < dd2_end {
        return Err(AnalyticsError::InsufficientPostPeak {
            needed: dd2_end,
            have: last,
        });
    }
    let valley_end = add_months_clamped(t_p, cfg.valley_horizon_months);

    let mut min_2m = f64::INFINITY;
    let mut min_valley = f64::INFINITY;
    for (d, v) in window_dates.iter().zip(window_values).skip(ip + 1) {
        if *d > valley_end {
            break;
        }
        if *d <= dd2_end {
            min_2m = min_2m.min(*v);
        }
        min_valley = min_valley.min(*v);
    }
    let dd_2months = peak_price - min_2m;
    let dd_max = peak_price - min_valley;

    let growth = compound_factor(rates, t1, t_p);
    let denom = peak_price - fit.params.p1 * growth;
    if !(denom > 0.0) {
        return Err(AnalyticsError::DegenerateDenominator);
    }
    let rc_2months = dd_2months / denom;
    let rc_max = dd_max / denom;
    let kappa = fit.params.gamma_is_one().then_some(rc_max);

    Ok(CrashMetrics {
        t_p,
        peak_price,
        dd_2months,
        dd_max,
        rc_2months,
        rc_max,
        kappa,
    })
}

/// Fundamental fraction `p1 / p(at)` of the discounted price at a window
/// date; the bubble component is its complement. Only specs with a free
/// fundamental price qualify.
pub fn bubble_fraction(
    fit: &FitResult,
    series: &DiscountedSeries,
    at: NaiveDate,
) -> Result<f64, AnalyticsError> {
    if !fit.spec.p1_is_free() {
        return Err(AnalyticsError::NoFundamentalParam { spec: fit.spec });
    }
    let idx = series
        .dates()
        .binary_search(&at)
        .map_err(|_| AnalyticsError::DateOutsideWindow { at })?;
    Ok(fit.params.p1 / series.values()[idx])
}

/// One scan window's outcome; `None` records a fit failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub t1: NaiveDate,
    pub t2: NaiveDate,
    pub outcome: Option<WindowOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowOutcome {
    pub params: LpplParams,
    pub rms: f64,
    pub boundary_ok: bool,
    pub lppl_ok: bool,
    pub pp_stationary: bool,
    pub df_stationary: bool,
}

/// Aggregated rolling-window census: stationarity fractions overall and
/// within the LPPL-qualified subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanCensus {
    pub spec: ModelSpec,
    pub length: usize,
    pub step: usize,
    pub seed: u64,
    pub windows: Vec<WindowSummary>,
    pub n_windows: usize,
    pub n_fit_ok: usize,
    pub n_failed: usize,
    pub n_stationary_pp: usize,
    pub n_stationary_df: usize,
    pub n_lppl: usize,
    pub n_lppl_stationary_pp: usize,
    pub n_lppl_stationary_df: usize,
}

impl ScanCensus {
    fn frac(num: usize, den: usize) -> f64 {
        if den == 0 {
            f64::NAN
        } else {
            num as f64 / den as f64
        }
    }

    /// Fraction of successfully fitted windows with stationary residuals.
    pub fn fraction_stationary_pp(&self) -> f64 {
        Self::frac(self.n_stationary_pp, self.n_fit_ok)
    }

    pub fn fraction_stationary_df(&self) -> f64 {
        Self::frac(self.n_stationary_df, self.n_fit_ok)
    }

    /// Fraction of fits satisfying the LPPL conditions, stationary or not.
    pub fn p_lppl(&self) -> f64 {
        Self::frac(self.n_lppl, self.n_fit_ok)
    }

    /// Stationary fraction among the LPPL-qualified fits.
    pub fn fraction_lppl_stationary_pp(&self) -> Option<f64> {
        (self.n_lppl > 0).then(|| Self::frac(self.n_lppl_stationary_pp, self.n_lppl))
    }

    pub fn fraction_lppl_stationary_df(&self) -> Option<f64> {
        (self.n_lppl > 0).then(|| Self::frac(self.n_lppl_stationary_df, self.n_lppl))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-window fit seed derived from the master seed and window index.
pub fn window_seed(master: u64, window_index: usize) -> u64 {
    splitmix64(master ^ window_index as u64)
}

/// The scan's window grid: starts anchored `anchor_offset` trading days
/// into the series and separated by `step`, each window exactly `length`
/// trading days (trailing partial window dropped).
pub fn scan_window_grid(
    prices: &PriceSeries,
    length: usize,
    step: usize,
    anchor_offset: usize,
) -> Result<Vec<(NaiveDate, NaiveDate)>, AnalyticsError> {
    if step == 0 {
        return Err(AnalyticsError::Series(SeriesError::ZeroStep));
    }
    let n = prices.len();
    if length == 0 || anchor_offset + length > n {
        return Err(AnalyticsError::NoWindows { length });
    }
    let count = (n - anchor_offset - length) / step + 1;
    let dates = prices.dates();
    Ok((0..count)
        .map(|k| {
            let s = anchor_offset + k * step;
            (dates[s], dates[s + length - 1])
        })
        .collect())
}

/// Discount, fit, and stationarity-test one scan window; `None` marks a
/// failed fit (recorded by the census, excluded from denominators).
pub fn scan_window(
    prices: &PriceSeries,
    rates: &RateSeries,
    spec: ModelSpec,
    t1: NaiveDate,
    t2: NaiveDate,
    n_starts: usize,
    seed: u64,
) -> WindowSummary {
    let outcome = (|| {
        let series = discount(prices, rates, t1, t2).ok()?;
        let bounds = calibrate::SearchBounds::for_window(&series);
        let fit = calibrate::fit(spec, &series, &bounds, n_starts, seed).ok()?;
        let stat = StationarityResult::evaluate(&fit.residuals.values).ok()?;
        Some(WindowOutcome {
            params: fit.params,
            rms: fit.rms,
            boundary_ok: fit.boundary_ok,
            lppl_ok: fit.diagnostics.lppl_conditions,
            pp_stationary: stat.pp_stationary(),
            df_stationary: stat.df_stationary(),
        })
    })();
    WindowSummary { t1, t2, outcome }
}

impl ScanCensus {
    /// Aggregate per-window summaries into the census counters.
    pub fn aggregate(
        spec: ModelSpec,
        length: usize,
        step: usize,
        seed: u64,
        windows: Vec<WindowSummary>,
    ) -> Self {
        let mut census = ScanCensus {
            spec,
            length,
            step,
            seed,
            n_windows: windows.len(),
            n_fit_ok: 0,
            n_failed: 0,
            n_stationary_pp: 0,
            n_stationary_df: 0,
            n_lppl: 0,
            n_lppl_stationary_pp: 0,
            n_lppl_stationary_df: 0,
            windows,
        };
        for w in &census.windows {
            match &w.outcome {
                None => census.n_failed += 1,
                Some(o) => {
                    census.n_fit_ok += 1;
                    census.n_stationary_pp += usize::from(o.pp_stationary);
                    census.n_stationary_df += usize::from(o.df_stationary);
                    if o.lppl_ok {
                        census.n_lppl += 1;
                        census.n_lppl_stationary_pp += usize::from(o.pp_stationary);
                        census.n_lppl_stationary_df += usize::from(o.df_stationary);
                    }
                }
            }
        }
        census
    }
}

/// Fit every rolling window, test its residuals for stationarity at the
/// 99% level, evaluate the LPPL conditions, and aggregate the fractions.
/// Windows are anchored `anchor_offset` trading days into the series, so
/// a canonical case-study window can be made to coincide with one of them.
/// Per-window fit failures are recorded and excluded from denominators.
#[allow(clippy::too_many_arguments)]
pub fn rolling_scan(
    prices: &PriceSeries,
    rates: &RateSeries,
    spec: ModelSpec,
    length: usize,
    step: usize,
    n_starts: usize,
    seed: u64,
    anchor_offset: usize,
) -> Result<ScanCensus, AnalyticsError> {
    let grid = scan_window_grid(prices, length, step, anchor_offset)?;
    let summaries: Vec<WindowSummary> = grid
        .par_iter()
        .enumerate()
        .map(|(k, &(t1, t2))| {
            scan_window(prices, rates, spec, t1, t2, n_starts, window_seed(seed, k))
        })
        .collect();
    Ok(ScanCensus::aggregate(spec, length, step, seed, summaries))
}
