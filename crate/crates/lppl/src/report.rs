//! Serializable report payloads shared between the library and the CLI.
//! Every payload carries the schema version; file-level envelope metadata
//! (input hashes, timestamps) is the CLI's business.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::analytics::{CrashMetrics, ScanCensus};
use crate::calibrate::{FitResult, SearchBounds};
use crate::model::{BubbleDiagnostics, LpplParams, ModelSpec};
use crate::stats::{BootstrapResult, WilksResult};

/// Bumped on any incompatible change to the report shapes.
pub const SCHEMA_VERSION: u32 = 1;

/// Calibration report for one spec on one window (the residual vector
/// itself ships separately as CSV).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub label: String,
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    pub window_days: usize,
    pub spec: ModelSpec,
    pub params: LpplParams,
    /// The critical time mapped back to the exchange calendar, rounded to
    /// the next trading day.
    pub t_c_date: NaiveDate,
    pub rms: f64,
    pub cost: f64,
    pub diagnostics: BubbleDiagnostics,
    pub boundary_ok: bool,
    pub bounds: SearchBounds,
    pub n_starts: usize,
    pub seed: u64,
    /// Populated when the undiscounted aftermath supports drawdown
    /// measurement.
    pub crash: Option<CrashMetrics>,
    /// `p1 / p(t1)` for specs with a free fundamental price.
    pub fundamental_fraction_t1: Option<f64>,
    /// `p1 / p(t_p)` at the realized peak.
    pub fundamental_fraction_peak: Option<f64>,
}

impl FitReport {
    pub fn from_fit(
        label: impl Into<String>,
        window_start: NaiveDate,
        window_end: NaiveDate,
        window_days: usize,
        t_c_date: NaiveDate,
        bounds: SearchBounds,
        n_starts: usize,
        fit: &FitResult,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            label: label.into(),
            window_start,
            window_end,
            window_days,
            spec: fit.spec,
            params: fit.params,
            t_c_date,
            rms: fit.rms,
            cost: fit.cost,
            diagnostics: fit.diagnostics,
            boundary_ok: fit.boundary_ok,
            bounds,
            n_starts,
            seed: fit.seed,
            crash: None,
            fundamental_fraction_t1: None,
            fundamental_fraction_peak: None,
        }
    }
}

/// Wilks (and optionally bootstrap) adjudication of one nested pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub label: String,
    pub spec_l: ModelSpec,
    pub spec_h: ModelSpec,
    pub wilks: WilksResult,
    pub bootstrap: Option<BootstrapResult>,
    pub seed: u64,
}

/// All five nested pairs on one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSet {
    pub schema_version: u32,
    pub label: String,
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    pub pairs: Vec<ComparisonReport>,
    pub seed: u64,
}

/// Census report payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusReport {
    pub schema_version: u32,
    pub label: String,
    pub census: ScanCensus,
    pub fraction_stationary_pp: f64,
    pub fraction_stationary_df: f64,
    pub p_lppl: f64,
    pub fraction_lppl_stationary_pp: Option<f64>,
    pub fraction_lppl_stationary_df: Option<f64>,
}

impl CensusReport {
    pub fn new(label: impl Into<String>, census: ScanCensus) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            label: label.into(),
            fraction_stationary_pp: census.fraction_stationary_pp(),
            fraction_stationary_df: census.fraction_stationary_df(),
            p_lppl: census.p_lppl(),
            fraction_lppl_stationary_pp: census.fraction_lppl_stationary_pp(),
            fraction_lppl_stationary_df: census.fraction_lppl_stationary_df(),
            census,
        }
    }
}
