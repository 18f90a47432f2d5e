//! Model adjudication: Wilks nested likelihood-ratio tests, two-directional
//! residual-reshuffling bootstrap, and unit-root stationarity tests.

mod bootstrap;
mod chi2;
mod unitroot;
mod wilks;

pub use bootstrap::{bootstrap_compare, permute_residuals, BootstrapConfig, BootstrapResult};
pub use chi2::chi2_sf;
pub use unitroot::{adf_test, adf_test_with_lags, df_critical_value, pp_test, StationarityResult, UnitRootOutcome};
pub use wilks::{wilks_test, WilksResult};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("x = {x} must be nonnegative")]
    NegativeArgument { x: f64 },
    #[error("degrees of freedom must be positive")]
    ZeroDof,
    #[error("incomplete gamma did not converge")]
    NoConvergence,
    #[error("{lower} is not nested in {higher}")]
    NotNested { lower: String, higher: String },
    #[error("residual windows differ: {n_l} vs {n_h} days")]
    WindowMismatch { n_l: usize, n_h: usize },
    #[error("series of length {n} is too short (need >= {min})")]
    SeriesTooShort { n: usize, min: usize },
    #[error("bootstrap needs at least one replication")]
    NoReplications,
    #[error("fit failed during bootstrap: {0}")]
    Fit(#[from] crate::calibrate::FitError),
}
