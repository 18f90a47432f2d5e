//! TOML run configuration. One file drives all subcommands; every knob the
//! CLI accepts as a flag overrides the corresponding field here.
//!
//! ```toml
//! seed = 42                      # master seed (required; no implicit RNG)
//! n_starts = 50
//! workers = 0                    # 0 = all cores
//!
//! [input]
//! price_csv = "data/hsi.csv"
//! rate_csv = "data/dtb3.csv"     # omit for zero rates
//! rate_units = "percent"         # "percent" | "decimal"
//! label = "HSI"                  # default: price file stem
//! price_has_header = true
//! price_date_col = 0
//! price_value_col = 4            # e.g. the Close column of an OHLCV file
//! rate_has_header = true
//! rate_date_col = 0
//! rate_value_col = 1
//!
//! [window]
//! t1 = "1995-02-01"
//! t2 = "1997-03-13"
//!
//! [fit]
//! specs = ["M0", "M1", "M2", "M3", "M0prime"]
//!
//! [bootstrap]
//! n_reps = 1000
//! block_len = 25
//! pairs = [["M0", "M1"]]         # default: all five nested pairs
//!
//! [scan]
//! length = 550
//! step = 25
//! anchor_offset = 0
//! n_starts = 16                  # scan-specific override
//!
//! [crash]
//! peak_horizon_months = 6
//! valley_horizon_months = 12
//!
//! [simulate]
//! mode = "deterministic-curve"   # | "full-stochastic"
//! t_c = 260.0
//! m = 0.35
//! omega = 7.0
//! phi = 1.2
//! a = 4.0
//! b = -0.35
//! c = 0.01
//! p1 = 0.0
//! gamma = 1.0
//! kappa = 0.8
//! sigma = 0.0
//! n_days = 200
//! start_date = "2001-01-01"
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use lppl::model::{LpplParams, ModelSpec};
use lppl::sim::{SimConfig, SimMode};
use lppl::timeseries::{ColumnSpec, RateUnits};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse config {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("config error: {0}")]
    Invalid(String),
    #[error("input file does not exist: {0}")]
    MissingFile(PathBuf),
}

fn default_n_starts() -> usize {
    50
}

fn default_true() -> bool {
    true
}

fn default_value_col() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; all randomness in a run derives from it.
    pub seed: u64,
    #[serde(default = "default_n_starts")]
    pub n_starts: usize,
    /// Worker threads; 0 keeps the rayon default (all cores).
    #[serde(default)]
    pub workers: usize,
    pub input: Option<InputConfig>,
    pub window: Option<WindowConfig>,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub bootstrap: BootstrapSection,
    pub scan: Option<ScanSection>,
    pub simulate: Option<SimulateSection>,
    #[serde(default)]
    pub crash: CrashSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Horizons for the post-peak drawdown measurement.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrashSection {
    pub peak_horizon_months: u32,
    pub valley_horizon_months: u32,
}

impl Default for CrashSection {
    fn default() -> Self {
        Self {
            peak_horizon_months: 6,
            valley_horizon_months: 12,
        }
    }
}

impl CrashSection {
    pub fn crash_config(&self) -> lppl::analytics::CrashConfig {
        lppl::analytics::CrashConfig {
            peak_horizon_months: self.peak_horizon_months,
            valley_horizon_months: self.valley_horizon_months,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub price_csv: PathBuf,
    pub rate_csv: Option<PathBuf>,
    #[serde(default)]
    pub rate_units: RateUnits,
    pub label: Option<String>,
    #[serde(default = "default_true")]
    pub price_has_header: bool,
    #[serde(default)]
    pub price_date_col: usize,
    #[serde(default = "default_value_col")]
    pub price_value_col: usize,
    #[serde(default = "default_true")]
    pub rate_has_header: bool,
    #[serde(default)]
    pub rate_date_col: usize,
    #[serde(default = "default_value_col")]
    pub rate_value_col: usize,
}

impl InputConfig {
    pub fn price_columns(&self) -> ColumnSpec {
        ColumnSpec {
            date_col: self.price_date_col,
            value_col: self.price_value_col,
            has_header: self.price_has_header,
        }
    }

    pub fn rate_columns(&self) -> ColumnSpec {
        ColumnSpec {
            date_col: self.rate_date_col,
            value_col: self.rate_value_col,
            has_header: self.rate_has_header,
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            self.price_csv
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "series".to_string())
        })
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub t1: NaiveDate,
    pub t2: NaiveDate,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub specs: Option<Vec<String>>,
}

impl FitConfig {
    pub fn specs(&self) -> Result<Vec<ModelSpec>, ConfigError> {
        match &self.specs {
            None => Ok(vec![
                ModelSpec::M0,
                ModelSpec::M1,
                ModelSpec::M2,
                ModelSpec::M3,
                ModelSpec::M0Prime,
            ]),
            Some(names) => names
                .iter()
                .map(|s| s.parse::<ModelSpec>().map_err(ConfigError::Invalid))
                .collect(),
        }
    }
}

fn default_n_reps() -> usize {
    1000
}

fn default_block_len() -> usize {
    25
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    #[serde(default = "default_n_reps")]
    pub n_reps: usize,
    #[serde(default = "default_block_len")]
    pub block_len: usize,
    pub pairs: Option<Vec<(String, String)>>,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        Self {
            n_reps: default_n_reps(),
            block_len: default_block_len(),
            pairs: None,
        }
    }
}

impl BootstrapSection {
    pub fn pairs(&self) -> Result<Vec<(ModelSpec, ModelSpec)>, ConfigError> {
        match &self.pairs {
            None => Ok(ModelSpec::NESTED_PAIRS.to_vec()),
            Some(pairs) => pairs
                .iter()
                .map(|(l, h)| {
                    let l = l.parse::<ModelSpec>().map_err(ConfigError::Invalid)?;
                    let h = h.parse::<ModelSpec>().map_err(ConfigError::Invalid)?;
                    Ok((l, h))
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub length: usize,
    #[serde(default = "default_scan_step")]
    pub step: usize,
    #[serde(default)]
    pub anchor_offset: usize,
    /// Scan-specific starts; the scan is per-window expensive, so this
    /// usually sits below the case-study `n_starts`.
    pub n_starts: Option<usize>,
}

fn default_scan_step() -> usize {
    25
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub mode: SimMode,
    pub t_c: f64,
    pub m: f64,
    pub omega: f64,
    pub phi: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    #[serde(default)]
    pub p1: f64,
    pub gamma: f64,
    pub kappa: f64,
    #[serde(default)]
    pub sigma: f64,
    pub n_days: usize,
    pub start_date: NaiveDate,
    pub label: Option<String>,
}

impl SimulateSection {
    pub fn sim_config(&self, seed: u64) -> SimConfig {
        let params = LpplParams {
            t_c: self.t_c,
            m: self.m,
            omega: self.omega,
            phi: self.phi,
            a: self.a,
            b: self.b,
            c: self.c,
            p1: self.p1,
            gamma: self.gamma,
        };
        SimConfig {
            params,
            kappa: self.kappa,
            sigma: self.sigma,
            n_days: self.n_days,
            seed,
            mode: self.mode,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source: Box::new(source),
        })?;
        Ok(cfg)
    }

    /// The input section, required by every data-driven subcommand.
    pub fn input(&self) -> Result<&InputConfig, ConfigError> {
        self.input
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("missing [input] section".into()))
    }

    pub fn window(&self) -> Result<WindowConfig, ConfigError> {
        self.window
            .ok_or_else(|| ConfigError::Invalid("missing [window] section".into()))
    }

    /// Check that the referenced input files exist.
    pub fn check_input_files(&self) -> Result<(), ConfigError> {
        if let Some(input) = &self.input {
            if !input.price_csv.exists() {
                return Err(ConfigError::MissingFile(input.price_csv.clone()));
            }
            if let Some(rate) = &input.rate_csv {
                if !rate.exists() {
                    return Err(ConfigError::MissingFile(rate.clone()));
                }
            }
        }
        Ok(())
    }
}
