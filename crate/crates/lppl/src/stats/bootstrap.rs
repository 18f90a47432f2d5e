//! Residual-reshuffling bootstrap comparison of a nested model pair.
//!
//! Under the null "the smaller model generated the data", synthetic series
//! are the fitted smaller-model curve times `(1 + R_pi(t))`, where `R_pi`
//! is a seeded permutation of the fitted relative residuals, either
//! day-by-day or in contiguous blocks (the trailing partial block stays in
//! place). Both specs are refit to every synthetic series and the
//! difference of their costs is compared against the real-data difference.
//! The symmetric run under "the larger model generated the data" gives the
//! type-II direction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::calibrate::{self, FitResult, SearchBounds};
use crate::model::{self, ModelSpec};
use crate::timeseries::DiscountedSeries;

const MAX_REDRAWS: usize = 3;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_reps: usize,
    /// 1 shuffles day by day; 25 shuffles blocks of 25 contiguous days.
    pub block_len: usize,
    pub seed: u64,
    /// Starting points for the real-data fits; replicas reuse a quarter of
    /// them (at least 2), seeded near the generating parameters.
    pub n_starts: usize,
}

/// Outcome of the two-directional bootstrap for one nested pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub spec_l: ModelSpec,
    pub spec_h: ModelSpec,
    pub n_reps: usize,
    pub block_len: usize,
    /// Real-data cost difference `cost(M_l) - cost(M_h)`.
    pub d_fit: f64,
    /// Cost differences on synthetic series generated from the fitted M_l.
    pub d_samples_l_true: Vec<f64>,
    /// Cost differences on synthetic series generated from the fitted M_h.
    pub d_samples_h_true: Vec<f64>,
    /// Fraction of M_l-true samples with `d_n > d_fit`.
    pub p_l_true: f64,
    /// Fraction of M_h-true samples with `d_n < d_fit`.
    pub p_h_true: f64,
    pub failures_l_true: usize,
    pub failures_h_true: usize,
    pub seed: u64,
}

/// Permute residuals in place-preserving blocks. `block_len <= 1` is a full
/// day-wise shuffle; otherwise whole contiguous blocks are permuted and a
/// trailing partial block is left where it is. The multiset of values is
/// preserved exactly.
pub fn permute_residuals(values: &[f64], block_len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = values.len();
    if block_len <= 1 {
        let mut out = values.to_vec();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            out.swap(i, j);
        }
        return out;
    }
    let n_blocks = n / block_len;
    if n_blocks <= 1 {
        return values.to_vec();
    }
    let mut order: Vec<usize> = (0..n_blocks).collect();
    for i in (1..n_blocks).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut out = Vec::with_capacity(n);
    for &b in &order {
        out.extend_from_slice(&values[b * block_len..(b + 1) * block_len]);
    }
    out.extend_from_slice(&values[n_blocks * block_len..]);
    out
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn model_curve(fit: &FitResult, series: &DiscountedSeries) -> Result<Vec<f64>, StatsError> {
    series
        .t_index()
        .iter()
        .map(|&t| {
            model::model_price(fit.spec, &fit.params, t as f64)
                .map_err(|e| StatsError::Fit(calibrate::FitError::Model(e)))
        })
        .collect()
}

struct NullRun {
    d_samples: Vec<f64>,
    failures: usize,
}

/// One direction of the bootstrap: the generating spec's fitted curve and
/// residuals produce the synthetic series; both specs are refit to each.
#[allow(clippy::too_many_arguments)]
fn run_null(
    generating: &FitResult,
    fit_l: &FitResult,
    fit_h: &FitResult,
    series: &DiscountedSeries,
    cfg: &BootstrapConfig,
    stream_tag: u64,
) -> Result<NullRun, StatsError> {
    let curve = model_curve(generating, series)?;
    let resid = &generating.residuals.values;
    let rep_starts = (cfg.n_starts / 4).max(2);

    let draws: Vec<Option<f64>> = (0..cfg.n_reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream((stream_tag << 32) | rep as u64);
            for attempt in 0..=MAX_REDRAWS {
                let perm = permute_residuals(resid, cfg.block_len, &mut rng);
                let values: Vec<f64> = curve
                    .iter()
                    .zip(&perm)
                    .map(|(c, r)| c * (1.0 + r))
                    .collect();
                if values.iter().any(|v| !(*v > 0.0)) {
                    continue; // nonpositive synthetic price: redraw
                }
                let syn = series.with_values(values);
                let syn_bounds = SearchBounds::for_window(&syn);
                let seed_l = splitmix64(
                    cfg.seed ^ stream_tag.rotate_left(17) ^ ((rep as u64) << 8) ^ attempt as u64,
                );
                let seed_h = splitmix64(seed_l);
                let rl = match calibrate::fit_perturbed(
                    fit_l.spec,
                    &syn,
                    &syn_bounds,
                    rep_starts,
                    seed_l,
                    &fit_l.params,
                    &[],
                ) {
                    Ok(r) => r,
                    Err(_) => continue,
                };
                let rh = match calibrate::fit_perturbed(
                    fit_h.spec,
                    &syn,
                    &syn_bounds,
                    rep_starts,
                    seed_h,
                    &fit_h.params,
                    &[rl.params],
                ) {
                    Ok(r) => r,
                    Err(_) => continue,
                };
                return Some(rl.cost - rh.cost);
            }
            None
        })
        .collect();

    let failures = draws.iter().filter(|d| d.is_none()).count();
    let d_samples = draws.into_iter().flatten().collect();
    Ok(NullRun {
        d_samples,
        failures,
    })
}

/// Two-directional bootstrap comparison of a nested pair on a window.
pub fn bootstrap_compare(
    spec_l: ModelSpec,
    spec_h: ModelSpec,
    series: &DiscountedSeries,
    cfg: &BootstrapConfig,
) -> Result<BootstrapResult, StatsError> {
    if !spec_l.is_nested_in(spec_h) {
        return Err(StatsError::NotNested {
            lower: spec_l.to_string(),
            higher: spec_h.to_string(),
        });
    }
    if cfg.n_reps == 0 {
        return Err(StatsError::NoReplications);
    }
    let bounds = SearchBounds::for_window(series);
    let fit_l = calibrate::fit(spec_l, series, &bounds, cfg.n_starts, cfg.seed)?;
    let fit_h = calibrate::fit_seeded(
        spec_h,
        series,
        &bounds,
        cfg.n_starts,
        cfg.seed,
        &[fit_l.params],
    )?;
    let d_fit = fit_l.cost - fit_h.cost;

    let null_l = run_null(&fit_l, &fit_l, &fit_h, series, cfg, 1)?;
    let null_h = run_null(&fit_h, &fit_l, &fit_h, series, cfg, 2)?;
    if null_l.d_samples.is_empty() || null_h.d_samples.is_empty() {
        return Err(StatsError::NoReplications);
    }

    let p_l_true = null_l
        .d_samples
        .iter()
        .filter(|&&d| d > d_fit)
        .count() as f64
        / null_l.d_samples.len() as f64;
    let p_h_true = null_h
        .d_samples
        .iter()
        .filter(|&&d| d < d_fit)
        .count() as f64
        / null_h.d_samples.len() as f64;

    Ok(BootstrapResult {
        spec_l,
        spec_h,
        n_reps: cfg.n_reps,
        block_len: cfg.block_len,
        d_fit,
        d_samples_l_true: null_l.d_samples,
        d_samples_h_true: null_h.d_samples,
        p_l_true,
        p_h_true,
        failures_l_true: null_l.failures,
        failures_h_true: null_h.failures,
        seed: cfg.seed,
    })
}
