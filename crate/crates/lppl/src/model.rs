//! The LPPL function, the nested model price curves, the profiled linear
//! solve for `(A, B, C)`, residuals, and bubble/LPPL validity conditions.
//!
//! Time is measured in trading days: `t` is the integer index of a trading
//! day inside the fit window and the critical time `t_c` is a real-valued
//! index strictly beyond every fitted day.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeseries::DiscountedSeries;

/// Candidates with `gamma` within this distance of 1 take the exponential
/// branch; the `1/(1-gamma)` exponent is meaningless closer than this.
pub const GAMMA_ONE_EPS: f64 = 1e-5;

/// Condition-number ceiling for the 3x3 normal system; beyond double
/// precision's reliable range, the candidate is discarded.
pub const NORMAL_COND_LIMIT: f64 = 1e12;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("t = {t} is not strictly before t_c = {t_c}")]
    TimeAtOrPastCritical { t: f64, t_c: f64 },
    #[error("model price undefined on window: F_LPPL(t={t}) = {f} <= 0 with gamma < 1")]
    UndefinedPrice { t: f64, f: f64 },
    #[error("transformed target undefined: p - p1 = {excess} <= 0")]
    TargetUndefined { excess: f64 },
    #[error("normal system ill-conditioned (cond = {cond:.3e})")]
    IllConditioned { cond: f64 },
    #[error("window is empty")]
    EmptyWindow,
}

/// The LPPL parameter vector. `a`, `b`, `c` are the linear coefficients of
/// the LPPL function; `p1` is the fundamental price and `gamma` the crash
/// nonlinearity (fixed at 0 and 1 respectively for specs that do not free
/// them).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpplParams {
    pub t_c: f64,
    pub m: f64,
    pub omega: f64,
    pub phi: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub p1: f64,
    pub gamma: f64,
}

impl LpplParams {
    /// Nonlinear-only constructor; the linear coefficients start at zero
    /// and are filled in by the profiled solve.
    pub fn nonlinear(t_c: f64, m: f64, omega: f64, phi: f64, p1: f64, gamma: f64) -> Self {
        Self {
            t_c,
            m,
            omega,
            phi,
            a: 0.0,
            b: 0.0,
            c: 0.0,
            p1,
            gamma,
        }
    }

    pub fn with_abc(mut self, a: f64, b: f64, c: f64) -> Self {
        self.a = a;
        self.b = b;
        self.c = c;
        self
    }

    /// True when this parameter set takes the `gamma = 1` exponential
    /// branch of the price map.
    pub fn gamma_is_one(&self) -> bool {
        (1.0 - self.gamma).abs() <= GAMMA_ONE_EPS
    }

    /// Canonical oscillation sign: `(C, phi)` and `(-C, phi + pi)` produce
    /// the same curve, so comparisons normalize to `C >= 0`.
    pub fn canonical_oscillation(mut self) -> Self {
        if self.c < 0.0 {
            self.c = -self.c;
            self.phi = normalize_phase(self.phi + std::f64::consts::PI);
        } else {
            self.phi = normalize_phase(self.phi);
        }
        self
    }
}

/// Wrap a phase into `[0, 2*pi)`.
pub fn normalize_phase(phi: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut p = phi % two_pi;
    if p < 0.0 {
        p += two_pi;
    }
    p
}

/// Which member of the nested family is being fit. The variant fixes which
/// of `p1` and `gamma` are free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelSpec {
    /// Original JLS model: `p1 = 0`, `gamma = 1`.
    M0,
    /// Fundamental price free: `gamma = 1`.
    M1,
    /// Crash nonlinearity free: `p1 = 0`.
    M2,
    /// Both free.
    M3,
    /// `M0` under a log-difference cost instead of relative price residuals.
    #[serde(rename = "M0prime")]
    M0Prime,
}

impl ModelSpec {
    pub const ALL: [ModelSpec; 5] = [
        ModelSpec::M0,
        ModelSpec::M1,
        ModelSpec::M2,
        ModelSpec::M3,
        ModelSpec::M0Prime,
    ];

    /// The five nested pairs `(lower, higher)` compared in the tests.
    pub const NESTED_PAIRS: [(ModelSpec, ModelSpec); 5] = [
        (ModelSpec::M0, ModelSpec::M1),
        (ModelSpec::M0, ModelSpec::M2),
        (ModelSpec::M1, ModelSpec::M3),
        (ModelSpec::M2, ModelSpec::M3),
        (ModelSpec::M0, ModelSpec::M3),
    ];

    pub fn p1_is_free(self) -> bool {
        matches!(self, ModelSpec::M1 | ModelSpec::M3)
    }

    pub fn gamma_is_free(self) -> bool {
        matches!(self, ModelSpec::M2 | ModelSpec::M3)
    }

    /// Total free parameters including the linear triple (A, B, C).
    pub fn free_param_count(self) -> usize {
        7 + usize::from(self.p1_is_free()) + usize::from(self.gamma_is_free())
    }

    /// Parameter-restriction nesting within the family (strict).
    pub fn is_nested_in(self, other: ModelSpec) -> bool {
        ModelSpec::NESTED_PAIRS.contains(&(self, other))
    }

    /// Force the fixed parameters of this spec onto a parameter vector.
    pub fn constrain(self, mut p: LpplParams) -> LpplParams {
        if !self.p1_is_free() {
            p.p1 = 0.0;
        }
        if !self.gamma_is_free() {
            p.gamma = 1.0;
        }
        p
    }
}

impl std::fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelSpec::M0 => "M0",
            ModelSpec::M1 => "M1",
            ModelSpec::M2 => "M2",
            ModelSpec::M3 => "M3",
            ModelSpec::M0Prime => "M0prime",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ModelSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "M0" | "m0" => Ok(ModelSpec::M0),
            "M1" | "m1" => Ok(ModelSpec::M1),
            "M2" | "m2" => Ok(ModelSpec::M2),
            "M3" | "m3" => Ok(ModelSpec::M3),
            "M0prime" | "m0prime" | "M0'" | "m0'" => Ok(ModelSpec::M0Prime),
            other => Err(format!(
                "unknown model spec {other:?} (expected M0, M1, M2, M3 or M0prime)"
            )),
        }
    }
}

/// Per-day fit residuals and their root mean square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualVector {
    pub values: Vec<f64>,
    pub rms: f64,
}

impl ResidualVector {
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len().max(1) as f64;
        let rms = (values.iter().map(|r| r * r).sum::<f64>() / n).sqrt();
        Self { values, rms }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sum of squared residuals (the calibration cost).
    pub fn cost(&self) -> f64 {
        self.values.iter().map(|r| r * r).sum()
    }
}

/// Evaluate `F_LPPL(t) = A + B*(tc-t)^m + C*(tc-t)^m * cos(omega*ln(tc-t) - phi)`.
pub fn eval_flppl(params: &LpplParams, t: f64) -> Result<f64, ModelError> {
    let u = params.t_c - t;
    if u <= 0.0 {
        return Err(ModelError::TimeAtOrPastCritical { t, t_c: params.t_c });
    }
    let ln_u = u.ln();
    let pow = (params.m * ln_u).exp();
    Ok(params.a
        + params.b * pow
        + params.c * pow * (params.omega * ln_u - params.phi).cos())
}

/// Model price at trading-day index `t` for the given spec.
pub fn model_price(spec: ModelSpec, params: &LpplParams, t: f64) -> Result<f64, ModelError> {
    let f = eval_flppl(params, t)?;
    price_from_f(spec, params, f, t)
}

#[inline]
fn price_from_f(spec: ModelSpec, params: &LpplParams, f: f64, t: f64) -> Result<f64, ModelError> {
    let p1 = if spec.p1_is_free() { params.p1 } else { 0.0 };
    let gamma_one = !spec.gamma_is_free() || params.gamma_is_one();
    if gamma_one {
        Ok(p1 + f.exp())
    } else {
        if f <= 0.0 {
            return Err(ModelError::UndefinedPrice { t, f });
        }
        Ok(p1 + f.powf(1.0 / (1.0 - params.gamma)))
    }
}

/// The target each spec regresses `F_LPPL` onto: `ln p` for `M0`/`M0'`,
/// `ln(p - p1)` for `M1`, `p^(1-gamma)` for `M2`, `(p - p1)^(1-gamma)`
/// for `M3` (`gamma = 1` branches reduce to the logarithms).
pub fn transformed_target(
    spec: ModelSpec,
    params: &LpplParams,
    price: f64,
) -> Result<f64, ModelError> {
    let p1 = if spec.p1_is_free() { params.p1 } else { 0.0 };
    let excess = price - p1;
    if excess <= 0.0 {
        return Err(ModelError::TargetUndefined { excess });
    }
    let gamma_one = !spec.gamma_is_free() || params.gamma_is_one();
    if gamma_one {
        Ok(excess.ln())
    } else {
        Ok(excess.powf(1.0 - params.gamma))
    }
}

/// Ordinary least squares of the transformed target on the regressors
/// `{1, (tc-t)^m, (tc-t)^m * cos(omega*ln(tc-t) - phi)}` via the 3x3
/// normal equations. Only the nonlinear fields of `params` are read.
pub fn solve_linear_abc(
    spec: ModelSpec,
    params: &LpplParams,
    series: &DiscountedSeries,
) -> Result<(f64, f64, f64), ModelError> {
    if series.is_empty() {
        return Err(ModelError::EmptyWindow);
    }
    // Accumulate the normal matrix in one pass.
    let mut s_f = 0.0;
    let mut s_g = 0.0;
    let mut s_ff = 0.0;
    let mut s_fg = 0.0;
    let mut s_gg = 0.0;
    let mut s_y = 0.0;
    let mut s_fy = 0.0;
    let mut s_gy = 0.0;
    let n = series.len() as f64;
    for (&t, &p) in series.t_index().iter().zip(series.values()) {
        let t = t as f64;
        let u = params.t_c - t;
        if u <= 0.0 {
            return Err(ModelError::TimeAtOrPastCritical { t, t_c: params.t_c });
        }
        let ln_u = u.ln();
        let f = (params.m * ln_u).exp();
        let g = f * (params.omega * ln_u - params.phi).cos();
        let y = transformed_target(spec, params, p)?;
        s_f += f;
        s_g += g;
        s_ff += f * f;
        s_fg += f * g;
        s_gg += g * g;
        s_y += y;
        s_fy += f * y;
        s_gy += g * y;
    }
    let normal = Matrix3::new(n, s_f, s_g, s_f, s_ff, s_fg, s_g, s_fg, s_gg);
    let rhs = Vector3::new(s_y, s_fy, s_gy);

    let eig = normal.symmetric_eigenvalues();
    let max_ev = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_ev = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = if min_ev <= 0.0 {
        f64::INFINITY
    } else {
        max_ev / min_ev
    };
    if !cond.is_finite() || cond > NORMAL_COND_LIMIT {
        return Err(ModelError::IllConditioned { cond });
    }
    let sol = normal
        .lu()
        .solve(&rhs)
        .ok_or(ModelError::IllConditioned { cond })?;
    if !sol.iter().all(|v| v.is_finite()) {
        return Err(ModelError::IllConditioned { cond });
    }
    Ok((sol[0], sol[1], sol[2]))
}

/// Relative price residuals `R(t) = (p(t) - p_M(t)) / p_M(t)`, or the
/// log-difference `ln p(t) - F_LPPL(t)` for `M0'` (its own cost definition).
pub fn residuals(
    spec: ModelSpec,
    params: &LpplParams,
    series: &DiscountedSeries,
) -> Result<ResidualVector, ModelError> {
    if series.is_empty() {
        return Err(ModelError::EmptyWindow);
    }
    let mut values = Vec::with_capacity(series.len());
    for (&t, &p) in series.t_index().iter().zip(series.values()) {
        let t = t as f64;
        let f = eval_flppl(params, t)?;
        let r = if spec == ModelSpec::M0Prime {
            p.ln() - f
        } else {
            let pm = price_from_f(spec, params, f, t)?;
            (p - pm) / pm
        };
        values.push(r);
    }
    Ok(ResidualVector::from_values(values))
}

/// The three independent bubble diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BubbleDiagnostics {
    /// `0 < m < 1`: the hazard rate accelerates toward `t_c`.
    pub bubble_m: bool,
    /// `b = -B*m - |C|*sqrt(m^2 + omega^2) >= 0`: the crash rate is
    /// non-negative everywhere.
    pub hazard_nonneg: bool,
    /// The empirical LPPL trust ranges: `B < 0` (price form),
    /// `0.1 <= m <= 0.9`, `6 <= omega <= 13`, `-1 <= C <= 1`.
    pub lppl_conditions: bool,
}

/// Evaluate the bubble and LPPL validity conditions on a parameter set.
pub fn check_bubble_conditions(params: &LpplParams) -> BubbleDiagnostics {
    let bubble_m = params.m > 0.0 && params.m < 1.0;
    let b_coef =
        -params.b * params.m - params.c.abs() * (params.m * params.m + params.omega * params.omega).sqrt();
    let hazard_nonneg = b_coef >= 0.0;
    let lppl_conditions = params.b < 0.0
        && (0.1..=0.9).contains(&params.m)
        && (6.0..=13.0).contains(&params.omega)
        && (-1.0..=1.0).contains(&params.c);
    BubbleDiagnostics {
        bubble_m,
        hazard_nonneg,
        lppl_conditions,
    }
}
