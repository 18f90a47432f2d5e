//! Dickey-Fuller and Phillips-Perron unit-root tests on fit residuals.
//!
//! Both tests run the constant-only regression
//! `dx_t = alpha + rho * x_{t-1} (+ lagged dx terms) + e_t` and compare the
//! t-ratio on `rho` against MacKinnon finite-sample critical values. The
//! Phillips-Perron variant corrects the lag-0 t-ratio nonparametrically
//! with a Bartlett-kernel (Newey-West) long-run variance, lag truncation
//! `floor(4 * (N/100)^(2/9))`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::StatsError;

/// Minimum observations accepted by the tests.
pub const MIN_OBS: usize = 25;

/// MacKinnon response-surface coefficients for the constant-only case:
/// `cv(N) = b0 + b1/N + b2/N^2 + b3/N^3`, at 1%, 5% and 10%.
const TAU_C: [[f64; 4]; 3] = [
    [-3.43035, -6.5393, -16.786, -79.433],
    [-2.86154, -2.8903, -4.234, -40.04],
    [-2.56677, -1.5384, -2.809, 0.0],
];

/// Finite-sample Dickey-Fuller critical value (constant-only regression)
/// at the given significance level (`0` -> 1%, `1` -> 5%, `2` -> 10%).
fn mackinnon_cv(level: usize, n_obs: usize) -> f64 {
    let n = n_obs as f64;
    let b = TAU_C[level];
    b[0] + b[1] / n + b[2] / (n * n) + b[3] / (n * n * n)
}

/// 99%-confidence (1% significance) Dickey-Fuller critical value for a
/// regression with `n_obs` usable observations.
pub fn df_critical_value(n_obs: usize) -> f64 {
    mackinnon_cv(0, n_obs)
}

/// One unit-root test outcome. `stationary` is the rejection of the
/// unit-root null at the 99% level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitRootOutcome {
    pub statistic: f64,
    pub critical_value: f64,
    pub stationary: bool,
    /// Constant input series: stationary by convention, no regression run.
    pub degenerate: bool,
}

/// Both tests on one residual series, at the 99% level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityResult {
    pub df: UnitRootOutcome,
    pub pp: UnitRootOutcome,
}

impl StationarityResult {
    pub fn evaluate(series: &[f64]) -> Result<Self, StatsError> {
        Ok(Self {
            df: adf_test(series)?,
            pp: pp_test(series)?,
        })
    }

    pub fn df_stationary(&self) -> bool {
        self.df.stationary
    }

    pub fn pp_stationary(&self) -> bool {
        self.pp.stationary
    }
}

struct DfRegression {
    se_rho: f64,
    t_stat: f64,
    residuals: Vec<f64>,
    n_obs: usize,
    /// OLS residual variance RSS/(n - k).
    s2: f64,
}

/// OLS of `dx_t` on `[1, x_{t-1}, dx_{t-1}, .., dx_{t-lags}]`.
/// Returns `None` for singular designs (degenerate input).
fn df_regression(x: &[f64], lags: usize) -> Option<DfRegression> {
    let n = x.len();
    let dx: Vec<f64> = (1..n).map(|t| x[t] - x[t - 1]).collect();
    let first = lags; // first usable index into dx
    let rows = dx.len() - first;
    let k = 2 + lags;
    if rows <= k + 1 {
        return None;
    }
    let mut design = DMatrix::zeros(rows, k);
    let mut y = DVector::zeros(rows);
    for (r, t) in (first..dx.len()).enumerate() {
        design[(r, 0)] = 1.0;
        design[(r, 1)] = x[t]; // x_{t-1} for dx_t = x_{t+1} - x_t indexing
        for j in 0..lags {
            design[(r, 2 + j)] = dx[t - 1 - j];
        }
        y[r] = dx[t];
    }
    let xtx = design.transpose() * &design;
    let xty = design.transpose() * &y;
    let xtx_inv = xtx.try_inverse()?;
    let beta = &xtx_inv * xty;
    let fitted = design * &beta;
    let resid = y - fitted;
    let rss: f64 = resid.iter().map(|u| u * u).sum();
    let s2 = rss / (rows - k) as f64;
    let var_rho = s2 * xtx_inv[(1, 1)];
    if !(var_rho > 0.0) || !var_rho.is_finite() {
        return None;
    }
    let se_rho = var_rho.sqrt();
    let rho_hat = beta[1];
    Some(DfRegression {
        se_rho,
        t_stat: rho_hat / se_rho,
        residuals: resid.iter().cloned().collect(),
        n_obs: rows,
        s2,
    })
}

fn is_degenerate(x: &[f64]) -> bool {
    let first = x[0];
    x.iter().all(|&v| (v - first).abs() < 1e-14)
}

fn degenerate_outcome() -> UnitRootOutcome {
    UnitRootOutcome {
        statistic: f64::NEG_INFINITY,
        critical_value: mackinnon_cv(0, MIN_OBS),
        stationary: true,
        degenerate: true,
    }
}

/// Plain Dickey-Fuller test (lag order 0), 99% level.
pub fn adf_test(series: &[f64]) -> Result<UnitRootOutcome, StatsError> {
    adf_test_with_lags(series, 0)
}

/// Augmented Dickey-Fuller with an explicit lag order, 99% level.
pub fn adf_test_with_lags(series: &[f64], lags: usize) -> Result<UnitRootOutcome, StatsError> {
    if series.len() < MIN_OBS {
        return Err(StatsError::SeriesTooShort {
            n: series.len(),
            min: MIN_OBS,
        });
    }
    if is_degenerate(series) {
        return Ok(degenerate_outcome());
    }
    let reg = match df_regression(series, lags) {
        Some(r) => r,
        None => return Ok(degenerate_outcome()),
    };
    let critical_value = mackinnon_cv(0, reg.n_obs);
    Ok(UnitRootOutcome {
        statistic: reg.t_stat,
        critical_value,
        stationary: reg.t_stat < critical_value,
        degenerate: false,
    })
}

/// Bartlett-kernel long-run variance of the regression residuals.
fn newey_west(u: &[f64], max_lag: usize) -> f64 {
    let n = u.len() as f64;
    let gamma = |j: usize| -> f64 {
        u.iter()
            .skip(j)
            .zip(u.iter())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n
    };
    let mut lam2 = gamma(0);
    for j in 1..=max_lag.min(u.len().saturating_sub(1)) {
        let w = 1.0 - j as f64 / (max_lag as f64 + 1.0);
        lam2 += 2.0 * w * gamma(j);
    }
    lam2.max(1e-300)
}

/// Phillips-Perron Z-tau test, 99% level.
pub fn pp_test(series: &[f64]) -> Result<UnitRootOutcome, StatsError> {
    if series.len() < MIN_OBS {
        return Err(StatsError::SeriesTooShort {
            n: series.len(),
            min: MIN_OBS,
        });
    }
    if is_degenerate(series) {
        return Ok(degenerate_outcome());
    }
    let reg = match df_regression(series, 0) {
        Some(r) => r,
        None => return Ok(degenerate_outcome()),
    };
    let t = reg.n_obs as f64;
    let gamma0 = reg.residuals.iter().map(|u| u * u).sum::<f64>() / t;
    let max_lag = (4.0 * (t / 100.0).powf(2.0 / 9.0)).floor() as usize;
    let lam2 = newey_west(&reg.residuals, max_lag);
    let lam = lam2.sqrt();
    let s = reg.s2.sqrt();
    let z_tau = (gamma0 / lam2).sqrt() * reg.t_stat
        - 0.5 * (lam2 - gamma0) / lam * (t * reg.se_rho / s);
    let critical_value = mackinnon_cv(0, reg.n_obs);
    Ok(UnitRootOutcome {
        statistic: z_tau,
        critical_value,
        stationary: z_tau < critical_value,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn white_noise(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn random_walk(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for t in 1..n {
            let e: f64 = StandardNormal.sample(rng);
            x[t] = x[t - 1] + e;
        }
        x
    }

    fn ar1(phi: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for t in 1..n {
            let e: f64 = StandardNormal.sample(rng);
            x[t] = phi * x[t - 1] + e;
        }
        x
    }

    #[test]
    fn critical_value_tends_to_asymptote() {
        assert!((mackinnon_cv(0, 1_000_000) + 3.43035).abs() < 1e-4);
        // finite-sample values are more negative
        assert!(mackinnon_cv(0, 50) < mackinnon_cv(0, 500));
        assert!(df_critical_value(550) < -3.43);
    }

    #[test]
    fn df_keeps_unit_root_on_most_random_walks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut rejections = 0;
        let trials = 60;
        for _ in 0..trials {
            let x = random_walk(500, &mut rng);
            if adf_test(&x).unwrap().stationary {
                rejections += 1;
            }
        }
        // nominal size 1%; allow up to 5%
        assert!(
            rejections * 20 <= trials,
            "{rejections}/{trials} spurious rejections"
        );
    }

    #[test]
    fn df_rejects_unit_root_on_white_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let trials = 60;
        let mut rejections = 0;
        for _ in 0..trials {
            let x = white_noise(500, &mut rng);
            if adf_test(&x).unwrap().stationary {
                rejections += 1;
            }
        }
        assert_eq!(rejections, trials, "white noise must always reject");
    }

    #[test]
    fn df_detects_ar_half_as_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let trials = 60;
        let mut rejections = 0;
        for _ in 0..trials {
            let x = ar1(0.5, 550, &mut rng);
            if adf_test(&x).unwrap().stationary {
                rejections += 1;
            }
        }
        assert!(rejections as f64 >= 0.95 * trials as f64);
    }

    #[test]
    fn pp_size_and_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let trials = 60;
        let mut size = 0;
        let mut power = 0;
        for _ in 0..trials {
            if pp_test(&random_walk(500, &mut rng)).unwrap().stationary {
                size += 1;
            }
            if pp_test(&ar1(0.5, 550, &mut rng)).unwrap().stationary {
                power += 1;
            }
        }
        assert!(size * 20 <= trials, "{size}/{trials} spurious rejections");
        assert!(power as f64 >= 0.95 * trials as f64, "power {power}/{trials}");
    }

    #[test]
    fn pp_close_to_df_under_iid_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let x = ar1(0.4, 800, &mut rng);
        let df = adf_test(&x).unwrap();
        let pp = pp_test(&x).unwrap();
        assert!(
            (df.statistic - pp.statistic).abs() < 0.5,
            "df {} vs pp {}",
            df.statistic,
            pp.statistic
        );
    }

    #[test]
    fn degenerate_series_is_stationary_by_convention() {
        let x = vec![3.25; 60];
        let df = adf_test(&x).unwrap();
        assert!(df.stationary && df.degenerate);
        let pp = pp_test(&x).unwrap();
        assert!(pp.stationary && pp.degenerate);
    }

    #[test]
    fn short_series_rejected() {
        let x = vec![0.0; 10];
        assert!(matches!(
            adf_test(&x),
            Err(StatsError::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn augmented_variant_accepts_lags() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let x = ar1(0.5, 400, &mut rng);
        let out = adf_test_with_lags(&x, 2).unwrap();
        assert!(out.stationary);
    }
}
