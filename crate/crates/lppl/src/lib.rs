//! Calibration toolkit for the generalized Johansen-Ledoit-Sornette (JLS)
//! bubble models.
//!
//! The library fits the log-periodic power law (LPPL) price signature
//!
//! ```text
//! F(t) = A + B*(tc - t)^m + C*(tc - t)^m * cos(omega * ln(tc - t) - phi)
//! ```
//!
//! to continuously discounted asset prices under four nested model variants
//! that differ in whether a fundamental price level `p1` and a crash
//! nonlinearity exponent `gamma` are free:
//!
//! * `M0`: `p(t) = exp(F)` (`p1 = 0`, `gamma = 1`)
//! * `M1`: `p(t) = p1 + exp(F)` (`gamma = 1`)
//! * `M2`: `p(t) = F^(1/(1-gamma))` (`p1 = 0`)
//! * `M3`: `p(t) = p1 + F^(1/(1-gamma))`
//!
//! plus `M0'`, which is `M0` calibrated under a log-difference cost.
//!
//! Modules:
//!
//! * [`timeseries`] — CSV ingestion, calendar alignment, continuous discounting.
//! * [`model`] — LPPL evaluation, model price curves, the profiled linear
//!   solve for `(A, B, C)`, residuals, bubble/LPPL validity conditions.
//! * [`calibrate`] — multi-start taboo search + Levenberg-Marquardt fitting
//!   with the boundary-rejection and best-cost selection rules.
//! * [`stats`] — Wilks nested likelihood-ratio tests, residual-reshuffling
//!   bootstrap model comparison, Dickey-Fuller and Phillips-Perron unit-root
//!   tests.
//! * [`analytics`] — drawdowns, crash-ratio and kappa inference, bubble
//!   fractions, rolling-window stationarity census.
//! * [`sim`] — synthetic price paths from the JLS jump-diffusion dynamics.
//! * [`report`] — serializable report shapes shared with the CLI.

pub mod analytics;
pub mod calibrate;
pub mod model;
pub mod report;
pub mod sim;
pub mod stats;
pub mod timeseries;

pub use calibrate::{fit, fit_m0_prime, FitResult, SearchBounds};
pub use model::{LpplParams, ModelSpec};
pub use timeseries::{DiscountedSeries, PriceSeries, RateSeries};
