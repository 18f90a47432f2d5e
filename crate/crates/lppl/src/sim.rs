//! Synthetic price paths from the generalized JLS jump-diffusion dynamics,
//! for recoverability studies and test fixtures.
//!
//! The stochastic mode advances the daily Euler scheme
//!
//! ```text
//! p_{t+1} = p_t * (1 + mu(t)) + sigma * p_t * Z_t,
//! mu(t)   = kappa * (p_t - p1)^gamma * h(t) / p_t,
//! ```
//!
//! with the crash hazard rate
//!
//! ```text
//! h(t) = B'*(tc-t)^(m-1) + C'*(tc-t)^(m-1) * cos(omega*ln(tc-t) - phi')
//! ```
//!
//! whose coefficients are recovered from the price-form parameters via
//! `B = -kappa*B'/m` and `C = -kappa*C'/sqrt(m^2 + omega^2)`; the hazard
//! phase is offset by `atan2(omega, m)` so that integrating the drift
//! reproduces the price-form phase exactly. Each day a crash fires with
//! probability `min(h, 1)`; the price then drops by `kappa*(p - p1)^gamma`
//! and the path stops (single-crash paths).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, check_bubble_conditions, LpplParams, ModelError, ModelSpec};
use crate::timeseries::{weekday_calendar, PriceSeries, SeriesError};

/// Tolerance for hazard roundoff; anything below `-HAZARD_TOL` is treated
/// as a genuine negativity (configuration inconsistent with the
/// non-negativity constraint).
pub const HAZARD_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("t_c = {t_c} must lie beyond the simulated range of {n_days} days")]
    CriticalTimeInsidePath { t_c: f64, n_days: usize },
    #[error("hazard parameters violate nonnegativity: b = {b} < 0")]
    HazardParamsNegative { b: f64 },
    #[error("hazard rate negative at t = {t}: {value} (inconsistent parameters)")]
    NegativeHazard { t: f64, value: f64 },
    #[error("price driven nonpositive at day {day}; path discarded")]
    NonpositivePrice { day: usize },
    #[error("invalid simulation config: {msg}")]
    BadConfig { msg: &'static str },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMode {
    /// Expected-price curve, no noise, no jump.
    DeterministicCurve,
    /// Daily Euler scheme with hazard-driven crash.
    FullStochastic,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimConfig {
    /// Generating parameter values; `p1` and `gamma` select the family
    /// member exactly as in the nested price maps.
    pub params: LpplParams,
    /// Crash-amplitude scale in (0, 1].
    pub kappa: f64,
    /// Daily volatility (per sqrt(day)).
    pub sigma: f64,
    pub n_days: usize,
    pub seed: u64,
    pub mode: SimMode,
}

/// A simulated path. `prices[crash_day]`, when present, is the post-crash
/// price; everything before it is the bubble regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPath {
    pub prices: Vec<f64>,
    pub crash_day: Option<usize>,
    pub jumped: bool,
}

/// Hazard coefficients `(B', C', phi')` implied by the price-form
/// parameters and `kappa`.
pub fn hazard_coefficients(params: &LpplParams, kappa: f64) -> (f64, f64, f64) {
    let b_prime = -params.m * params.b / kappa;
    let c_prime = -params.c * (params.m * params.m + params.omega * params.omega).sqrt() / kappa;
    let phi_prime = params.phi - params.omega.atan2(params.m);
    (b_prime, c_prime, phi_prime)
}

/// Crash hazard rate at trading-day index `t`. Negative values beyond
/// roundoff are an inconsistency of the parameters (the nonnegativity
/// constraint is violated) and surface as an error.
pub fn hazard_rate(params: &LpplParams, kappa: f64, t: f64) -> Result<f64, SimError> {
    let u = params.t_c - t;
    if u <= 0.0 {
        return Err(ModelError::TimeAtOrPastCritical { t, t_c: params.t_c }.into());
    }
    let (b_prime, c_prime, phi_prime) = hazard_coefficients(params, kappa);
    let ln_u = u.ln();
    let pow = ((params.m - 1.0) * ln_u).exp();
    let h = b_prime * pow + c_prime * pow * (params.omega * ln_u - phi_prime).cos();
    if h < -HAZARD_TOL {
        return Err(SimError::NegativeHazard { t, value: h });
    }
    Ok(h.max(0.0))
}

fn validate(cfg: &SimConfig) -> Result<(), SimError> {
    if cfg.n_days < 2 {
        return Err(SimError::BadConfig {
            msg: "n_days must be at least 2",
        });
    }
    if !(cfg.sigma >= 0.0) {
        return Err(SimError::BadConfig {
            msg: "sigma must be nonnegative",
        });
    }
    if !(cfg.kappa > 0.0 && cfg.kappa <= 1.0) {
        return Err(SimError::BadConfig {
            msg: "kappa must lie in (0, 1]",
        });
    }
    if !(cfg.params.gamma > 0.0 && cfg.params.gamma <= 1.0) {
        return Err(SimError::BadConfig {
            msg: "gamma must lie in (0, 1]",
        });
    }
    if !(cfg.params.p1 >= 0.0) {
        return Err(SimError::BadConfig {
            msg: "p1 must be nonnegative",
        });
    }
    if cfg.params.t_c <= (cfg.n_days - 1) as f64 {
        return Err(SimError::CriticalTimeInsidePath {
            t_c: cfg.params.t_c,
            n_days: cfg.n_days,
        });
    }
    Ok(())
}

/// Generate one path. Deterministic-curve mode evaluates the expected
/// price pointwise; full-stochastic mode runs the Euler scheme with a
/// hazard-driven single crash. Identical configs (including seed) yield
/// identical paths.
pub fn simulate(cfg: &SimConfig) -> Result<SimPath, SimError> {
    validate(cfg)?;
    match cfg.mode {
        SimMode::DeterministicCurve => {
            let prices = (0..cfg.n_days)
                .map(|t| model::model_price(ModelSpec::M3, &cfg.params, t as f64))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(SimPath {
                prices,
                crash_day: None,
                jumped: false,
            })
        }
        SimMode::FullStochastic => {
            // Jump nonnegativity must hold over the whole in-range window.
            let diag = check_bubble_conditions(&cfg.params);
            if !diag.hazard_nonneg {
                let b = -cfg.params.b * cfg.params.m
                    - cfg.params.c.abs()
                        * (cfg.params.m * cfg.params.m + cfg.params.omega * cfg.params.omega)
                            .sqrt();
                return Err(SimError::HazardParamsNegative { b });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let p1 = cfg.params.p1;
            let gamma = cfg.params.gamma;
            let gamma_one = cfg.params.gamma_is_one();
            let mut prices = Vec::with_capacity(cfg.n_days);
            prices.push(model::model_price(ModelSpec::M3, &cfg.params, 0.0)?);
            for t in 0..cfg.n_days - 1 {
                let p = *prices.last().unwrap();
                let h = hazard_rate(&cfg.params, cfg.kappa, t as f64)?;
                let jump_prob = h.min(1.0);
                let excess = (p - p1).max(0.0);
                if rng.random::<f64>() < jump_prob {
                    // Crash: drop by kappa * (p - p1)^gamma and stop.
                    let after = if gamma_one && cfg.kappa == 1.0 {
                        p1 // exact full correction to the fundamental value
                    } else {
                        p - cfg.kappa * excess.powf(gamma)
                    };
                    prices.push(after);
                    return Ok(SimPath {
                        crash_day: Some(prices.len() - 1),
                        prices,
                        jumped: true,
                    });
                }
                let drift = cfg.kappa * excess.powf(gamma) * h;
                let z: f64 = StandardNormal.sample(&mut rng);
                let next = p + drift + cfg.sigma * p * z;
                if !(next > 0.0) || !next.is_finite() {
                    return Err(SimError::NonpositivePrice { day: t + 1 });
                }
                prices.push(next);
            }
            Ok(SimPath {
                prices,
                crash_day: None,
                jumped: false,
            })
        }
    }
}

/// Wrap a simulated path as a price series on a synthetic weekday
/// calendar, in the same shape the CSV loader ingests.
pub fn path_to_price_series(
    path: &SimPath,
    start: chrono::NaiveDate,
    label: impl Into<String>,
) -> Result<PriceSeries, SimError> {
    let dates = weekday_calendar(start, path.prices.len());
    Ok(PriceSeries::new(label, dates, path.prices.clone())?)
}
