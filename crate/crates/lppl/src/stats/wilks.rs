//! Wilks log-likelihood-ratio test for a nested model pair under i.i.d.
//! Gaussian residuals.
//!
//! With the maximum-likelihood variance `sigma^2 = sum R^2 / N` the
//! statistic `T = 2 N ln(sigma_l/sigma_h) + sum R_l^2/sigma_l^2
//! - sum R_h^2/sigma_h^2` collapses to `N ln(sigma_l^2 / sigma_h^2)`,
//! asymptotically chi-squared with `k` extra parameters.

use serde::{Deserialize, Serialize};

use super::chi2::chi2_sf;
use super::StatsError;
use crate::calibrate::FitResult;

/// Outcome of the nested likelihood-ratio test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilksResult {
    /// The log-likelihood-ratio statistic (can dip below zero only when the
    /// richer fit is worse; the p-value is then 1).
    pub t_stat: f64,
    /// Extra free parameters of the higher model.
    pub k: u32,
    pub p_value: f64,
}

/// Run the Wilks test on fits of a nested pair over the same window.
pub fn wilks_test(fit_l: &FitResult, fit_h: &FitResult) -> Result<WilksResult, StatsError> {
    if !fit_l.spec.is_nested_in(fit_h.spec) {
        return Err(StatsError::NotNested {
            lower: fit_l.spec.to_string(),
            higher: fit_h.spec.to_string(),
        });
    }
    let n_l = fit_l.residuals.len();
    let n_h = fit_h.residuals.len();
    if n_l != n_h || n_l == 0 {
        return Err(StatsError::WindowMismatch { n_l, n_h });
    }
    let k = (fit_h.spec.free_param_count() - fit_l.spec.free_param_count()) as u32;
    let n = n_l as f64;
    // MLE variances; the ratio of costs equals the ratio of variances.
    let ss_l = fit_l.residuals.cost();
    let ss_h = fit_h.residuals.cost();
    let t_stat = if ss_h > 0.0 {
        n * (ss_l / ss_h).ln()
    } else if ss_l > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    let p_value = if t_stat.is_infinite() {
        0.0
    } else {
        chi2_sf(t_stat.max(0.0), k)?
    };
    Ok(WilksResult {
        t_stat,
        k,
        p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::FitResult;
    use crate::model::{check_bubble_conditions, LpplParams, ModelSpec, ResidualVector};

    fn fit_with_residuals(spec: ModelSpec, values: Vec<f64>) -> FitResult {
        let params = LpplParams::nonlinear(300.0, 0.3, 7.0, 0.0, 0.0, 1.0).with_abc(5.0, -0.4, 0.05);
        let residuals = ResidualVector::from_values(values);
        let cost = residuals.cost();
        let rms = residuals.rms;
        FitResult {
            spec,
            params,
            residuals,
            cost,
            rms,
            diagnostics: check_bubble_conditions(&params),
            boundary_ok: true,
            n_starts_tried: 1,
            seed: 0,
        }
    }

    #[test]
    fn identical_fits_give_t_zero_p_one() {
        let r: Vec<f64> = (0..100).map(|i| ((i * 37 % 11) as f64 - 5.0) / 100.0).collect();
        let f_l = fit_with_residuals(ModelSpec::M0, r.clone());
        let f_h = fit_with_residuals(ModelSpec::M1, r);
        let w = wilks_test(&f_l, &f_h).unwrap();
        assert_eq!(w.t_stat, 0.0);
        assert_eq!(w.p_value, 1.0);
        assert_eq!(w.k, 1);
    }

    #[test]
    fn variance_ratio_example() {
        // N = 250, sigma_l^2/sigma_h^2 = 1.02:
        // T = 250 ln 1.02 = 4.9506568240449283, p(k=1) = 0.026080758063649
        // (erfc oracle).
        let n = 250;
        let base: Vec<f64> = (0..n).map(|i| ((i % 7) as f64 - 3.0) / 50.0).collect();
        let scaled: Vec<f64> = base.iter().map(|v| v * 1.02_f64.sqrt()).collect();
        let f_l = fit_with_residuals(ModelSpec::M0, scaled);
        let f_h = fit_with_residuals(ModelSpec::M1, base);
        let w = wilks_test(&f_l, &f_h).unwrap();
        assert!(
            (w.t_stat - 4.950_656_824_044_928).abs() < 1e-9,
            "T = {}",
            w.t_stat
        );
        assert!(
            (w.p_value - 0.026_080_758_063_649).abs() < 1e-9,
            "p = {}",
            w.p_value
        );
    }

    #[test]
    fn dof_follows_free_param_difference() {
        let r: Vec<f64> = vec![0.01; 50];
        let pairs = [
            (ModelSpec::M0, ModelSpec::M1, 1),
            (ModelSpec::M0, ModelSpec::M2, 1),
            (ModelSpec::M1, ModelSpec::M3, 1),
            (ModelSpec::M2, ModelSpec::M3, 1),
            (ModelSpec::M0, ModelSpec::M3, 2),
        ];
        for (lo, hi, k) in pairs {
            let w = wilks_test(
                &fit_with_residuals(lo, r.clone()),
                &fit_with_residuals(hi, r.clone()),
            )
            .unwrap();
            assert_eq!(w.k, k, "{lo} in {hi}");
        }
    }

    #[test]
    fn non_nested_pair_rejected() {
        let r: Vec<f64> = vec![0.01; 50];
        let f1 = fit_with_residuals(ModelSpec::M1, r.clone());
        let f2 = fit_with_residuals(ModelSpec::M2, r.clone());
        assert!(matches!(
            wilks_test(&f1, &f2),
            Err(StatsError::NotNested { .. })
        ));
        // reversed direction is not nested either
        let f0 = fit_with_residuals(ModelSpec::M0, r);
        assert!(wilks_test(&f1, &f0).is_err());
    }

    #[test]
    fn mismatched_windows_rejected() {
        let f_l = fit_with_residuals(ModelSpec::M0, vec![0.01; 50]);
        let f_h = fit_with_residuals(ModelSpec::M1, vec![0.01; 60]);
        assert!(matches!(
            wilks_test(&f_l, &f_h),
            Err(StatsError::WindowMismatch { .. })
        ));
    }

    #[test]
    fn worse_higher_model_caps_p_at_one() {
        let f_l = fit_with_residuals(ModelSpec::M0, vec![0.01; 50]);
        let f_h = fit_with_residuals(ModelSpec::M1, vec![0.02; 50]);
        let w = wilks_test(&f_l, &f_h).unwrap();
        assert!(w.t_stat < 0.0);
        assert_eq!(w.p_value, 1.0);
    }
}
