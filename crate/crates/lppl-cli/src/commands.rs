//! Subcommand implementations. Each writes machine-readable reports into
//! the output directory; exit-code semantics are 0 = success,
//! 1 = computational failure, 2 = configuration or I/O error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use lppl::analytics::{
    bubble_fraction, crash_metrics, scan_window, scan_window_grid, window_seed, ScanCensus,
    WindowSummary,
};
use lppl::calibrate::{self, FitResult, SearchBounds};
use lppl::model::ModelSpec;
use lppl::report::{CensusReport, ComparisonReport, ComparisonSet, FitReport, SCHEMA_VERSION};
use lppl::sim;
use lppl::stats::{bootstrap_compare, wilks_test, BootstrapConfig};
use lppl::timeseries::{
    discount, load_price_csv, load_rate_csv, write_price_csv, DiscountedSeries, PriceSeries,
    RateSeries,
};
use rayon::prelude::*;

use crate::config::{ConfigError, RunConfig, WindowConfig};
use crate::output::{self, Provenance};

/// Errors mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Exit code 2: bad configuration, missing files, unparseable input.
    Config(String),
    /// Exit code 1: the computation itself failed.
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Compute(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<lppl::timeseries::SeriesError> for CliError {
    fn from(e: lppl::timeseries::SeriesError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<calibrate::FitError> for CliError {
    fn from(e: calibrate::FitError) -> Self {
        CliError::Compute(e.to_string())
    }
}

impl From<lppl::stats::StatsError> for CliError {
    fn from(e: lppl::stats::StatsError) -> Self {
        CliError::Compute(e.to_string())
    }
}

impl From<sim::SimError> for CliError {
    fn from(e: sim::SimError) -> Self {
        match e {
            sim::SimError::BadConfig { .. } | sim::SimError::CriticalTimeInsidePath { .. } => {
                CliError::Config(e.to_string())
            }
            other => CliError::Compute(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

/// Everything a data-driven subcommand needs, loaded and discounted.
pub struct LoadedData {
    pub prices: PriceSeries,
    pub rates: RateSeries,
    pub label: String,
    pub window: WindowConfig,
    pub series: DiscountedSeries,
    pub prov: Provenance,
}

fn provenance(cfg_path: &Path, inputs: &[&Path]) -> Result<Provenance, CliError> {
    let input_sha256 = output::hash_files(inputs)?;
    let config_sha256 = output::hash_files(&[cfg_path])?;
    Ok(Provenance {
        input_sha256,
        config_sha256,
    })
}

pub fn load_data(cfg: &RunConfig, cfg_path: &Path) -> Result<LoadedData, CliError> {
    cfg.check_input_files()?;
    let input = cfg.input()?;
    let window = cfg.window()?;
    let prices = load_price_csv(&input.price_csv, &input.price_columns(), input.label())?;
    let rates = match &input.rate_csv {
        Some(path) => load_rate_csv(path, &input.rate_columns(), input.rate_units)?,
        // No rate file: a flat zero rate (discounting is the identity).
        None => RateSeries::new(
            vec![NaiveDate::from_ymd_opt(1900, 1, 1).unwrap()],
            vec![0.0],
        )
        .expect("static zero rate"),
    };
    let series = discount(&prices, &rates, window.t1, window.t2)?;
    let mut inputs: Vec<&Path> = vec![&input.price_csv];
    if let Some(r) = &input.rate_csv {
        inputs.push(r);
    }
    let prov = provenance(cfg_path, &inputs)?;
    Ok(LoadedData {
        label: input.label(),
        prices,
        rates,
        window,
        series,
        prov,
    })
}

/// Fit the requested specs with the nesting seed chain: `M1` and `M2`
/// start from the `M0` optimum, `M3` from all of `M0`, `M1`, `M2`.
pub fn fit_chain(
    specs: &[ModelSpec],
    series: &DiscountedSeries,
    bounds: &SearchBounds,
    n_starts: usize,
    seed: u64,
) -> Result<BTreeMap<String, FitResult>, CliError> {
    let order = [
        ModelSpec::M0,
        ModelSpec::M0Prime,
        ModelSpec::M1,
        ModelSpec::M2,
        ModelSpec::M3,
    ];
    let mut fits: BTreeMap<String, FitResult> = BTreeMap::new();
    for spec in order.into_iter().filter(|s| specs.contains(s)) {
        let mut seeds = Vec::new();
        let parents: &[ModelSpec] = match spec {
            ModelSpec::M1 | ModelSpec::M2 => &[ModelSpec::M0],
            ModelSpec::M3 => &[ModelSpec::M0, ModelSpec::M1, ModelSpec::M2],
            _ => &[],
        };
        for p in parents {
            if let Some(f) = fits.get(&p.to_string()) {
                seeds.push(f.params);
            }
        }
        let fit = calibrate::fit_seeded(spec, series, bounds, n_starts, seed, &seeds)?;
        fits.insert(spec.to_string(), fit);
    }
    Ok(fits)
}

fn f(v: f64) -> String {
    format!("{v:.12e}")
}

pub fn cmd_fit(
    cfg: &RunConfig,
    cfg_path: &Path,
    only_spec: Option<ModelSpec>,
) -> Result<Vec<PathBuf>, CliError> {
    let data = load_data(cfg, cfg_path)?;
    let bounds = SearchBounds::for_window(&data.series);
    let specs = match only_spec {
        Some(s) => vec![s],
        None => cfg.fit.specs()?,
    };
    let fits = fit_chain(&specs, &data.series, &bounds, cfg.n_starts, cfg.seed)?;
    let out = &cfg.output.dir;
    let mut written = Vec::new();
    for (_, fit) in fits {
        let spec = fit.spec;
        let t_c_date = data.series.index_to_date(fit.params.t_c);
        let mut report = FitReport::from_fit(
            data.label.clone(),
            data.window.t1,
            data.window.t2,
            data.series.len(),
            t_c_date,
            bounds,
            cfg.n_starts,
            &fit,
        );
        report.crash = crash_metrics(
            &data.prices,
            &data.rates,
            &fit,
            data.window.t1,
            &cfg.crash.crash_config(),
        )
        .ok();
        if spec.p1_is_free() {
            report.fundamental_fraction_t1 =
                bubble_fraction(&fit, &data.series, data.series.dates()[0]).ok();
            if let Some(crash) = &report.crash {
                report.fundamental_fraction_peak =
                    discount(&data.prices, &data.rates, data.window.t1, crash.t_p)
                        .ok()
                        .and_then(|ext| bubble_fraction(&fit, &ext, crash.t_p).ok());
            }
        }

        let stem = format!("fit_{}_{}", data.label, spec);
        written.push(output::write_json(
            out,
            &format!("{stem}.json"),
            cfg.seed,
            &data.prov,
            &report,
        )?);

        let resid_rows: Vec<String> = data
            .series
            .dates()
            .iter()
            .zip(&fit.residuals.values)
            .map(|(d, r)| format!("{d},{}", f(*r)))
            .collect();
        written.push(output::write_csv(
            out,
            &format!("{stem}_residuals.csv"),
            cfg.seed,
            &data.prov,
            "date,residual",
            &resid_rows,
        )?);

        let price_spec = if spec == ModelSpec::M0Prime {
            ModelSpec::M0
        } else {
            spec
        };
        let curve_rows: Vec<String> = data
            .series
            .dates()
            .iter()
            .zip(data.series.t_index())
            .zip(data.series.values())
            .map(|((d, &t), p)| {
                let model = lppl::model::model_price(price_spec, &fit.params, t as f64)
                    .unwrap_or(f64::NAN);
                format!("{d},{t},{},{}", f(*p), f(model))
            })
            .collect();
        written.push(output::write_csv(
            out,
            &format!("{stem}_curve.csv"),
            cfg.seed,
            &data.prov,
            "date,t_index,discounted_price,model_price",
            &curve_rows,
        )?);
    }
    Ok(written)
}

pub fn cmd_compare(cfg: &RunConfig, cfg_path: &Path) -> Result<Vec<PathBuf>, CliError> {
    let data = load_data(cfg, cfg_path)?;
    let bounds = SearchBounds::for_window(&data.series);
    let specs = [ModelSpec::M0, ModelSpec::M1, ModelSpec::M2, ModelSpec::M3];
    let fits = fit_chain(&specs, &data.series, &bounds, cfg.n_starts, cfg.seed)?;
    let mut pairs = Vec::new();
    for (l, h) in ModelSpec::NESTED_PAIRS {
        let fit_l = &fits[&l.to_string()];
        let fit_h = &fits[&h.to_string()];
        let wilks = wilks_test(fit_l, fit_h)?;
        pairs.push(ComparisonReport {
            schema_version: SCHEMA_VERSION,
            label: data.label.clone(),
            spec_l: l,
            spec_h: h,
            wilks,
            bootstrap: None,
            seed: cfg.seed,
        });
    }
    let set = ComparisonSet {
        schema_version: SCHEMA_VERSION,
        label: data.label.clone(),
        window_start: data.window.t1,
        window_end: data.window.t2,
        pairs,
        seed: cfg.seed,
    };
    let path = output::write_json(
        &cfg.output.dir,
        &format!("compare_{}.json", data.label),
        cfg.seed,
        &data.prov,
        &set,
    )?;
    Ok(vec![path])
}

pub fn cmd_bootstrap(
    cfg: &RunConfig,
    cfg_path: &Path,
    n_reps: Option<usize>,
    block_len: Option<usize>,
) -> Result<Vec<PathBuf>, CliError> {
    let data = load_data(cfg, cfg_path)?;
    let bcfg = BootstrapConfig {
        n_reps: n_reps.unwrap_or(cfg.bootstrap.n_reps),
        block_len: block_len.unwrap_or(cfg.bootstrap.block_len),
        seed: cfg.seed,
        n_starts: cfg.n_starts,
    };
    let mut written = Vec::new();
    for (l, h) in cfg.bootstrap.pairs()? {
        let result = bootstrap_compare(l, h, &data.series, &bcfg)?;
        written.push(output::write_json(
            &cfg.output.dir,
            &format!("bootstrap_{}_{}_{}.json", data.label, l, h),
            cfg.seed,
            &data.prov,
            &result,
        )?);
    }
    Ok(written)
}

fn census_row(w: &WindowSummary) -> String {
    match &w.outcome {
        Some(o) => format!(
            "{},{},ok,{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            w.t1,
            w.t2,
            f(o.params.t_c),
            f(o.params.m),
            f(o.params.omega),
            f(o.params.phi),
            f(o.params.a),
            f(o.params.b),
            f(o.params.c),
            f(o.params.p1),
            f(o.params.gamma),
            f(o.rms),
            o.boundary_ok,
            o.lppl_ok,
            o.pp_stationary,
            o.df_stationary,
        ),
        None => format!("{},{},failed,,,,,,,,,,,,,", w.t1, w.t2),
    }
}

pub fn cmd_scan(
    cfg: &RunConfig,
    cfg_path: &Path,
    length: Option<usize>,
    step: Option<usize>,
) -> Result<Vec<PathBuf>, CliError> {
    let data = load_data(cfg, cfg_path)?;
    let scan = cfg
        .scan
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [scan] section".into()))?;
    let length = length.unwrap_or(scan.length);
    let step = step.unwrap_or(scan.step);
    let n_starts = scan.n_starts.unwrap_or(cfg.n_starts);
    let specs = cfg.fit.specs()?;
    let grid = scan_window_grid(&data.prices, length, step, scan.anchor_offset)
        .map_err(|e| CliError::Config(e.to_string()))?;

    let header = "t1,t2,status,t_c,m,omega,phi,a,b,c,p1,gamma,rms,boundary_ok,lppl_ok,pp_stationary,df_stationary";
    let chunk = rayon::current_num_threads().max(1) * 4;
    let mut written = Vec::new();
    for spec in specs {
        let csv_path = output::start_csv(
            &cfg.output.dir,
            &format!("scan_{}_{}.csv", data.label, spec),
            cfg.seed,
            &data.prov,
            header,
        )?;
        let mut summaries: Vec<WindowSummary> = Vec::with_capacity(grid.len());
        for (chunk_idx, windows) in grid.chunks(chunk).enumerate() {
            let base = chunk_idx * chunk;
            let batch: Vec<WindowSummary> = windows
                .par_iter()
                .enumerate()
                .map(|(i, &(t1, t2))| {
                    scan_window(
                        &data.prices,
                        &data.rates,
                        spec,
                        t1,
                        t2,
                        n_starts,
                        window_seed(cfg.seed, base + i),
                    )
                })
                .collect();
            // flush partial results before the next chunk
            let rows: Vec<String> = batch.iter().map(census_row).collect();
            output::append_csv(&csv_path, &rows)?;
            summaries.extend(batch);
        }
        let census = ScanCensus::aggregate(spec, length, step, cfg.seed, summaries);
        let report = CensusReport::new(data.label.clone(), census);
        written.push(csv_path);
        written.push(output::write_json(
            &cfg.output.dir,
            &format!("scan_{}_{}.json", data.label, spec),
            cfg.seed,
            &data.prov,
            &report,
        )?);
    }
    Ok(written)
}

pub fn cmd_simulate(cfg: &RunConfig, cfg_path: &Path) -> Result<Vec<PathBuf>, CliError> {
    let section = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [simulate] section".into()))?;
    let sim_cfg = section.sim_config(cfg.seed);
    let path = sim::simulate(&sim_cfg)?;
    let label = section.label.clone().unwrap_or_else(|| "sim".to_string());
    let series = sim::path_to_price_series(&path, section.start_date, label.clone())?;
    let prov = provenance(cfg_path, &[])?;

    let out = &cfg.output.dir;
    std::fs::create_dir_all(out)?;
    let csv_path = out.join(format!("sim_{label}.csv"));
    write_price_csv(
        &csv_path,
        &series,
        &[
            format!("schema_version: {SCHEMA_VERSION}"),
            format!("seed: {}", cfg.seed),
            format!("config_sha256: {}", prov.config_sha256),
        ],
    )?;

    #[derive(serde::Serialize)]
    struct SimReport<'a> {
        schema_version: u32,
        label: &'a str,
        config: &'a sim::SimConfig,
        crash_day: Option<usize>,
        jumped: bool,
        n_prices: usize,
    }
    let report = SimReport {
        schema_version: SCHEMA_VERSION,
        label: &label,
        config: &sim_cfg,
        crash_day: path.crash_day,
        jumped: path.jumped,
        n_prices: path.prices.len(),
    };
    let json_path = output::write_json(
        out,
        &format!("sim_{label}.json"),
        cfg.seed,
        &prov,
        &report,
    )?;
    Ok(vec![csv_path, json_path])
}

/// Collate prior outputs in a directory into one Markdown summary with
/// calibration, Wilks, bootstrap and census tables.
pub fn cmd_report(dir: &Path) -> Result<PathBuf, CliError> {
    use serde_json::Value;

    let mut fit_reports: Vec<Value> = Vec::new();
    let mut compare_sets: Vec<Value> = Vec::new();
    let mut bootstraps: Vec<Value> = Vec::new();
    let mut censuses: Vec<Value> = Vec::new();

    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    entries.sort();
    for path in &entries {
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        let text = std::fs::read_to_string(path)?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{name}: {e}")))?;
        let payload = value.get("payload").cloned().unwrap_or(Value::Null);
        if name.starts_with("fit_") {
            fit_reports.push(payload);
        } else if name.starts_with("compare_") {
            compare_sets.push(payload);
        } else if name.starts_with("bootstrap_") {
            bootstraps.push(payload);
        } else if name.starts_with("scan_") {
            censuses.push(payload);
        }
    }

    let mut md = String::from("# Model comparison summary\n");
    let get = |v: &Value, k: &str| -> String {
        match v.get(k) {
            Some(Value::Number(n)) if n.is_u64() || n.is_i64() => n.to_string(),
            Some(Value::Number(n)) => {
                let x = n.as_f64().unwrap_or(f64::NAN);
                format!("{x:.4}")
            }
            Some(Value::String(s)) => s.clone(),
            Some(Value::Bool(b)) => b.to_string(),
            _ => "-".to_string(),
        }
    };

    if !fit_reports.is_empty() {
        md.push_str("\n## Calibration\n\n");
        md.push_str("| series | spec | t_c | m | omega | phi | p_f(t1)/p(t1) | p_f(tp)/p(tp) | gamma | RC_2m | RC_max | RMS |\n");
        md.push_str("|---|---|---|---|---|---|---|---|---|---|---|---|\n");
        for r in &fit_reports {
            let params = r.get("params").cloned().unwrap_or(Value::Null);
            let spec = get(r, "spec");
            let gamma = if spec == "M1" || spec == "M3" || spec == "M2" {
                get(&params, "gamma")
            } else {
                "-".into()
            };
            let crash = r.get("crash").cloned().unwrap_or(Value::Null);
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                get(r, "label"),
                spec,
                get(r, "t_c_date"),
                get(&params, "m"),
                get(&params, "omega"),
                get(&params, "phi"),
                get(r, "fundamental_fraction_t1"),
                get(r, "fundamental_fraction_peak"),
                gamma,
                get(&crash, "rc_2months"),
                get(&crash, "rc_max"),
                get(r, "rms"),
            );
        }
    }

    if !compare_sets.is_empty() {
        md.push_str("\n## Wilks nested tests (p-values)\n\n");
        md.push_str("| series | (M0,M1) | (M0,M2) | (M1,M3) | (M2,M3) | (M0,M3) |\n");
        md.push_str("|---|---|---|---|---|---|\n");
        for set in &compare_sets {
            let label = get(set, "label");
            let mut cells: BTreeMap<String, String> = BTreeMap::new();
            if let Some(Value::Array(pairs)) = set.get("pairs") {
                for p in pairs {
                    let key = format!("{}-{}", get(p, "spec_l"), get(p, "spec_h"));
                    let wilks = p.get("wilks").cloned().unwrap_or(Value::Null);
                    cells.insert(key, get(&wilks, "p_value"));
                }
            }
            let cell = |k: &str| cells.get(k).cloned().unwrap_or_else(|| "-".into());
            let _ = writeln!(
                md,
                "| {label} | {} | {} | {} | {} | {} |",
                cell("M0-M1"),
                cell("M0-M2"),
                cell("M1-M3"),
                cell("M2-M3"),
                cell("M0-M3"),
            );
        }
    }

    if !bootstraps.is_empty() {
        md.push_str("\n## Bootstrap comparison\n\n");
        md.push_str("| pair | block | n_reps | d_fit | p (M_l true) | p (M_h true) | failures |\n");
        md.push_str("|---|---|---|---|---|---|---|\n");
        for b in &bootstraps {
            let _ = writeln!(
                md,
                "| ({},{}) | {} | {} | {} | {} | {} | {}+{} |",
                get(b, "spec_l"),
                get(b, "spec_h"),
                get(b, "block_len"),
                get(b, "n_reps"),
                get(b, "d_fit"),
                get(b, "p_l_true"),
                get(b, "p_h_true"),
                get(b, "failures_l_true"),
                get(b, "failures_h_true"),
            );
        }
    }

    if !censuses.is_empty() {
        md.push_str("\n## Rolling-window stationarity census\n\n");
        md.push_str("| series | spec | windows | fit ok | PP stationary | DF stationary | P_LPPL | PP (LPPL subset) | DF (LPPL subset) |\n");
        md.push_str("|---|---|---|---|---|---|---|---|---|\n");
        for c in &censuses {
            let census = c.get("census").cloned().unwrap_or(Value::Null);
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                get(c, "label"),
                get(&census, "spec"),
                get(&census, "n_windows"),
                get(&census, "n_fit_ok"),
                get(c, "fraction_stationary_pp"),
                get(c, "fraction_stationary_df"),
                get(c, "p_lppl"),
                get(c, "fraction_lppl_stationary_pp"),
                get(c, "fraction_lppl_stationary_df"),
            );
        }
    }

    let path = dir.join("report.md");
    std::fs::write(&path, md)?;
    Ok(path)
}
