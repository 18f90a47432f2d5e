//! Acceptance suite. One test per criterion; each prints a
//! `[criterion N] PASS/FAIL/SKIP` line (visible with `--nocapture`).
//!
//! Criteria 1, 2, 3 and 5 need the real case-study data, which ships as a
//! download script (`scripts/fetch_data.sh`) rather than raw files. They
//! SKIP when the data directory is absent. The census (criterion 5) and
//! the full 1000-replication bootstrap additionally require
//! `LPPL_ACCEPT_FULL=1` because they run for hours; criterion 3 defaults
//! to its fast mode (100 replications) when data is present.

use std::path::PathBuf;
use std::time::Instant;

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use lppl::analytics::rolling_scan;
use lppl::calibrate::{self, FitResult, SearchBounds};
use lppl::model::{self, LpplParams, ModelSpec};
use lppl::sim::{self, SimConfig, SimMode};
use lppl::stats::{self, BootstrapConfig};
use lppl::timeseries::{
    discount, load_price_csv, load_rate_csv, ColumnSpec, DiscountedSeries, PriceSeries,
    RateSeries, RateUnits,
};

fn line(id: &str, status: &str, detail: &str) {
    println!("[criterion {id}] {status}: {detail}");
}

// ------------------------------------------------------------------
// case-study data plumbing
// ------------------------------------------------------------------

fn data_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("LPPL_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR"))
                .join("../..")
                .join("data")
        });
    dir.is_dir().then_some(dir)
}

fn full_mode() -> bool {
    std::env::var("LPPL_ACCEPT_FULL").is_ok_and(|v| v == "1")
}

struct CaseStudy {
    label: &'static str,
    file: &'static str,
    t1: &'static str,
    t2: &'static str,
    // Reference M0 calibration: critical date, m, omega, rms
    t_c: &'static str,
    m: f64,
    omega: f64,
    rms: f64,
}

const CASES: [CaseStudy; 3] = [
    CaseStudy {
        label: "HSI",
        file: "hsi.csv",
        t1: "1995-02-01",
        t2: "1997-03-13",
        t_c: "1997-07-27",
        m: 0.19,
        omega: 6.97,
        rms: 0.0320,
    },
    CaseStudy {
        label: "GSPC",
        file: "gspc.csv",
        t1: "1986-09-01",
        t2: "1987-08-26",
        t_c: "1987-09-13",
        m: 0.70,
        omega: 6.62,
        rms: 0.0196,
    },
    CaseStudy {
        label: "SSEC",
        file: "ssec.csv",
        t1: "2008-10-24",
        t2: "2009-07-10",
        t_c: "2009-07-29",
        m: 0.63,
        omega: 16.60,
        rms: 0.0258,
    },
];

fn date(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

fn load_case(dir: &PathBuf, case: &CaseStudy) -> (PriceSeries, RateSeries) {
    let cols = ColumnSpec::default();
    let prices = load_price_csv(dir.join(case.file), &cols, case.label)
        .unwrap_or_else(|e| panic!("loading {}: {e}", case.file));
    let rates = load_rate_csv(dir.join("dtb3.csv"), &cols, RateUnits::Percent)
        .unwrap_or_else(|e| panic!("loading dtb3.csv: {e}"));
    (prices, rates)
}

fn discounted_window(case: &CaseStudy, dir: &PathBuf) -> (PriceSeries, RateSeries, DiscountedSeries) {
    let (prices, rates) = load_case(dir, case);
    let series = discount(&prices, &rates, date(case.t1), date(case.t2))
        .unwrap_or_else(|e| panic!("discounting {}: {e}", case.label));
    (prices, rates, series)
}

/// Trading-day distance between two dates on the window's calendar,
/// extrapolating weekdays past the end.
fn trading_day_distance(series: &DiscountedSeries, a: NaiveDate, b: NaiveDate) -> usize {
    let pos = |d: NaiveDate| -> i64 {
        match series.dates().binary_search(&d) {
            Ok(i) => i as i64,
            Err(i) if i < series.len() => i as i64,
            Err(_) => {
                // past the window: count weekdays from the last date
                let mut steps = series.len() as i64 - 1;
                let mut cur = *series.dates().last().unwrap();
                while cur < d {
                    cur = cur.succ_opt().unwrap();
                    if !matches!(cur.weekday(), chrono::Weekday::Sat | chrono::Weekday::Sun) {
                        steps += 1;
                    }
                }
                steps
            }
        }
    };
    (pos(a) - pos(b)).unsigned_abs() as usize
}

fn fit_family(series: &DiscountedSeries, n_starts: usize, seed: u64) -> [FitResult; 4] {
    let bounds = SearchBounds::for_window(series);
    let m0 = calibrate::fit(ModelSpec::M0, series, &bounds, n_starts, seed).unwrap();
    let m1 = calibrate::fit_seeded(ModelSpec::M1, series, &bounds, n_starts, seed, &[m0.params])
        .unwrap();
    let m2 = calibrate::fit_seeded(ModelSpec::M2, series, &bounds, n_starts, seed, &[m0.params])
        .unwrap();
    let m3 = calibrate::fit_seeded(
        ModelSpec::M3,
        series,
        &bounds,
        n_starts,
        seed,
        &[m0.params, m1.params, m2.params],
    )
    .unwrap();
    [m0, m1, m2, m3]
}

// ------------------------------------------------------------------
// criterion 1 — case-study calibration, standard-model rows
// ------------------------------------------------------------------

#[test]
fn criterion_1_case_study_calibration() {
    let Some(dir) = data_dir() else {
        line(
            "1",
            "SKIP",
            "case-study data not present; run scripts/fetch_data.sh",
        );
        return;
    };
    let mut failures = Vec::new();
    for case in &CASES {
        let (_, _, series) = discounted_window(case, &dir);
        let bounds = SearchBounds::for_window(&series);
        let started = Instant::now();
        let fit = calibrate::fit(ModelSpec::M0, &series, &bounds, 50, 20240 + case.m as u64)
            .unwrap_or_else(|e| panic!("{} M0 fit: {e}", case.label));
        let elapsed = started.elapsed();
        let t_c_date = series.index_to_date(fit.params.t_c);
        let dist = trading_day_distance(&series, t_c_date, date(case.t_c));
        let checks = [
            (dist <= 10, format!("t_c {} vs {} ({} td)", t_c_date, case.t_c, dist)),
            (
                (fit.params.m - case.m).abs() <= 0.10,
                format!("m {:.3} vs {:.2}", fit.params.m, case.m),
            ),
            (
                (fit.params.omega - case.omega).abs() <= 1.0,
                format!("omega {:.3} vs {:.2}", fit.params.omega, case.omega),
            ),
            (
                (fit.rms - case.rms).abs() <= 0.15 * case.rms,
                format!("rms {:.4} vs {:.4}", fit.rms, case.rms),
            ),
            (
                elapsed.as_secs() <= 300,
                format!("runtime {:.1}s", elapsed.as_secs_f64()),
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                failures.push(format!("{}: {}", case.label, msg));
            }
        }
    }
    if failures.is_empty() {
        line("1", "PASS", "HSI/GSPC/SSEC M0 within the reference tolerances");
    } else {
        line("1", "FAIL", &failures.join("; "));
        panic!("criterion 1 failed: {failures:?}");
    }
}

// ------------------------------------------------------------------
// criterion 2 — Wilks conclusions on the historical bubbles
// ------------------------------------------------------------------

#[test]
fn criterion_2_wilks_conclusions() {
    let Some(dir) = data_dir() else {
        line(
            "2",
            "SKIP",
            "case-study data not present; run scripts/fetch_data.sh",
        );
        return;
    };
    let mut failures = Vec::new();
    for case in &CASES {
        let (_, _, series) = discounted_window(case, &dir);
        let [m0, m1, m2, m3] = fit_family(&series, 50, 4242);
        let p = |l: &FitResult, h: &FitResult| stats::wilks_test(l, h).unwrap().p_value;
        match case.label {
            "GSPC" => {
                let p01 = p(&m0, &m1);
                let p02 = p(&m0, &m2);
                if p01 > 0.01 {
                    failures.push(format!("GSPC (M0,M1) p = {p01:.4} > 0.01"));
                }
                if p02 > 0.01 {
                    failures.push(format!("GSPC (M0,M2) p = {p02:.4} > 0.01"));
                }
            }
            "HSI" => {
                for (l, h, name) in [
                    (&m0, &m1, "(M0,M1)"),
                    (&m0, &m2, "(M0,M2)"),
                    (&m1, &m3, "(M1,M3)"),
                    (&m2, &m3, "(M2,M3)"),
                    (&m0, &m3, "(M0,M3)"),
                ] {
                    let pv = p(l, h);
                    if pv < 0.10 {
                        failures.push(format!("HSI {name} p = {pv:.4} < 0.10"));
                    }
                }
            }
            "SSEC" => {
                let p03 = p(&m0, &m3);
                if p03 > 0.15 {
                    failures.push(format!("SSEC (M0,M3) p = {p03:.4} > 0.15"));
                }
            }
            _ => unreachable!(),
        }
    }
    if failures.is_empty() {
        line("2", "PASS", "Wilks sign-and-magnitude conclusions reproduced");
    } else {
        line("2", "FAIL", &failures.join("; "));
        panic!("criterion 2 failed: {failures:?}");
    }
}

// ------------------------------------------------------------------
// criterion 3 — bootstrap conclusions on the historical bubbles
// ------------------------------------------------------------------

#[test]
fn criterion_3_bootstrap_conclusions() {
    let Some(dir) = data_dir() else {
        line(
            "3",
            "SKIP",
            "case-study data not present; run scripts/fetch_data.sh",
        );
        return;
    };
    let n_reps = if full_mode() { 1000 } else { 100 };
    let mut failures = Vec::new();

    let run = |case: &CaseStudy, pair: (ModelSpec, ModelSpec), block: usize| -> f64 {
        let (_, _, series) = discounted_window(case, &dir);
        let cfg = BootstrapConfig {
            n_reps,
            block_len: block,
            seed: 7_777,
            n_starts: 24,
        };
        stats::bootstrap_compare(pair.0, pair.1, &series, &cfg)
            .unwrap_or_else(|e| panic!("{} bootstrap: {e}", case.label))
            .p_l_true
    };

    let hsi = run(&CASES[0], (ModelSpec::M0, ModelSpec::M1), 25);
    if !(0.31..=0.61).contains(&hsi) {
        failures.push(format!("HSI (M0,M1) 25-day p_l_true = {hsi:.3} outside [0.31, 0.61]"));
    }
    let gspc = run(&CASES[1], (ModelSpec::M0, ModelSpec::M1), 1);
    if gspc > 0.10 {
        failures.push(format!("GSPC (M0,M1) daily p_l_true = {gspc:.3} > 0.10"));
    }
    let ssec = run(&CASES[2], (ModelSpec::M0, ModelSpec::M3), 25);
    if ssec > 0.15 {
        failures.push(format!("SSEC (M0,M3) p_l_true = {ssec:.3} > 0.15"));
    }

    if failures.is_empty() {
        line(
            "3",
            "PASS",
            &format!("bootstrap conclusions reproduced at n_reps = {n_reps}"),
        );
    } else {
        line("3", "FAIL", &failures.join("; "));
        panic!("criterion 3 failed: {failures:?}");
    }
}

// ------------------------------------------------------------------
// criterion 4 — desk-scale property suite
// ------------------------------------------------------------------

#[test]
fn criterion_4a_nesting_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..1000 {
        let p = LpplParams {
            t_c: rng.random_range(120.0..400.0),
            m: rng.random_range(0.05..0.95),
            omega: rng.random_range(2.0..20.0),
            phi: rng.random_range(0.0..std::f64::consts::TAU),
            a: rng.random_range(1.0..9.0),
            b: -rng.random_range(0.01..0.5),
            c: rng.random_range(-0.2..0.2),
            p1: rng.random_range(0.0..5.0),
            gamma: rng.random_range(0.1..0.9),
        };
        let t = rng.random_range(0.0..100.0);
        let m0 = model::model_price(ModelSpec::M0, &p, t).unwrap();
        let m1 = model::model_price(ModelSpec::M1, &LpplParams { p1: 0.0, ..p }, t).unwrap();
        let m2 = model::model_price(ModelSpec::M2, &LpplParams { gamma: 1.0, ..p }, t).unwrap();
        let m3 = model::model_price(
            ModelSpec::M3,
            &LpplParams {
                p1: 0.0,
                gamma: 1.0,
                ..p
            },
            t,
        )
        .unwrap();
        for v in [m1, m2, m3] {
            assert!(
                ((v - m0) / m0).abs() <= 1e-12,
                "nesting identity broken: {v} vs {m0}"
            );
        }
    }
    line("4a", "PASS", "nesting identities <= 1e-12 on 1000 draws");
}

#[test]
fn criterion_4b_linear_solve_vs_qr_oracle() {
    use nalgebra::{DMatrix, DVector};
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let n = 200;
    let start = NaiveDate::from_ymd_opt(1995, 2, 1).unwrap();
    let dates = lppl::timeseries::weekday_calendar(start, n);
    let mut tested = 0;
    while tested < 500 {
        let nl = LpplParams::nonlinear(
            rng.random_range(210.0..300.0),
            rng.random_range(0.1..0.9),
            rng.random_range(4.0..13.0),
            rng.random_range(0.0..std::f64::consts::TAU),
            0.0,
            1.0,
        );
        let curve = nl.with_abc(
            rng.random_range(2.0..8.0),
            -rng.random_range(0.05..0.9),
            rng.random_range(-0.2..0.2),
        );
        let values: Vec<f64> = (0..n)
            .map(|t| {
                let noise: f64 = rng.random_range(-0.01..0.01);
                (model::eval_flppl(&curve, t as f64).unwrap() + noise).exp()
            })
            .collect();
        let series = DiscountedSeries::from_values(dates.clone(), values);
        let got = match model::solve_linear_abc(ModelSpec::M0, &nl, &series) {
            Ok(v) => v,
            Err(_) => continue, // ill-conditioned instance: not in scope
        };
        // independent QR route on the full design matrix
        let mut design = DMatrix::zeros(n, 3);
        let mut rhs = DVector::zeros(n);
        for (row, (&t, &p)) in series.t_index().iter().zip(series.values()).enumerate() {
            let u = nl.t_c - t as f64;
            let f = u.powf(nl.m);
            design[(row, 0)] = 1.0;
            design[(row, 1)] = f;
            design[(row, 2)] = f * (nl.omega * u.ln() - nl.phi).cos();
            rhs[row] = p.ln();
        }
        let qr = design.qr();
        let qty = qr.q().transpose() * rhs;
        let want = qr
            .r()
            .solve_upper_triangular(&qty.rows(0, 3).clone_owned())
            .unwrap();
        let scale = want.iter().map(|v| v.abs()).fold(1e-12, f64::max);
        for (g, w) in [got.0, got.1, got.2].iter().zip(want.iter()) {
            assert!(
                (g - w).abs() / scale <= 1e-8,
                "normal equations {g} vs QR {w}"
            );
        }
        tested += 1;
    }
    line("4b", "PASS", "profiled linear solve matches QR oracle <= 1e-8 on 500 instances");
}

/// Draw well-posed generating parameters for a spec on an `n`-day window.
fn draw_truth(spec: ModelSpec, n: usize, rng: &mut ChaCha8Rng) -> LpplParams {
    let t2 = (n - 1) as f64;
    let t_c = t2 + rng.random_range(0.08..0.30) * t2;
    let m = rng.random_range(0.2..0.7);
    let omega = rng.random_range(5.5..11.0);
    let phi = rng.random_range(0.3..5.9);
    let drop = rng.random_range(1.0..2.5); // total power-law amplitude
    let b = -drop / t_c.powf(m);
    let c_sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let c = c_sign * rng.random_range(0.1..0.4) * b.abs();
    let a = if spec.gamma_is_free() {
        // keep F > 0 over the window for the fractional-gamma price map
        drop * 1.4 + rng.random_range(0.5..1.5)
    } else {
        rng.random_range(3.0..5.0)
    };
    let gamma = if spec.gamma_is_free() {
        rng.random_range(0.15..0.8)
    } else {
        1.0
    };
    let mut truth = LpplParams {
        t_c,
        m,
        omega,
        phi,
        a,
        b,
        c,
        p1: 0.0,
        gamma,
    };
    if spec.p1_is_free() {
        // bare curve floor; p1 = c * floor keeps the p1 bounds interior
        let bare_min = (0..n)
            .map(|t| {
                model::model_price(ModelSpec::M3, &truth, t as f64).expect("bare curve defined")
            })
            .fold(f64::INFINITY, f64::min);
        truth.p1 = rng.random_range(0.5..3.0) * bare_min;
    }
    truth
}

fn angular_distance(a: f64, b: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let d = (a - b).rem_euclid(two_pi);
    d.min(two_pi - d)
}

#[test]
fn criterion_4c_noiseless_roundtrip() {
    let n = 200;
    let specs = [ModelSpec::M0, ModelSpec::M1, ModelSpec::M2, ModelSpec::M3];
    let mut worst: (f64, String) = (0.0, String::new());
    for (si, spec) in specs.into_iter().enumerate() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(43_000 + 100 * si as u64 + seed);
            let truth = draw_truth(spec, n, &mut rng).canonical_oscillation();
            let cfg = SimConfig {
                params: truth,
                kappa: 0.5,
                sigma: 0.0,
                n_days: n,
                seed,
                mode: SimMode::DeterministicCurve,
            };
            let path = sim::simulate(&cfg).unwrap();
            let series = DiscountedSeries::from_values(
                lppl::timeseries::weekday_calendar(
                    NaiveDate::from_ymd_opt(1995, 2, 1).unwrap(),
                    n,
                ),
                path.prices,
            );
            let bounds = SearchBounds::for_window(&series);
            let fit = calibrate::fit(spec, &series, &bounds, 48, 9_000 + seed)
                .unwrap_or_else(|e| panic!("{spec} seed {seed}: {e}"));
            let got = fit.params;
            let mut track = |name: &str, rel: f64| {
                if rel > worst.0 {
                    worst = (rel, format!("{spec} seed {seed} {name}"));
                }
                assert!(
                    rel <= 1e-3,
                    "{spec} seed {seed}: {name} relative error {rel:.2e}\n truth {truth:?}\n got {got:?}"
                );
            };
            assert!(
                (got.t_c - truth.t_c).abs() <= 0.5,
                "{spec} seed {seed}: t_c {} vs {}",
                got.t_c,
                truth.t_c
            );
            track("m", ((got.m - truth.m) / truth.m).abs());
            track("omega", ((got.omega - truth.omega) / truth.omega).abs());
            track("a", ((got.a - truth.a) / truth.a).abs());
            track("b", ((got.b - truth.b) / truth.b).abs());
            track("c", ((got.c - truth.c) / truth.c).abs());
            track(
                "phi",
                angular_distance(got.phi, truth.phi) / (2.0 * std::f64::consts::PI),
            );
            if spec.p1_is_free() {
                track("p1", ((got.p1 - truth.p1) / truth.p1).abs());
            }
            if spec.gamma_is_free() {
                track("gamma", ((got.gamma - truth.gamma) / truth.gamma).abs());
            }
        }
    }
    line(
        "4c",
        "PASS",
        &format!(
            "noiseless roundtrip <= 1e-3 for 4 specs x 20 seeds (worst {:.1e} at {})",
            worst.0, worst.1
        ),
    );
}

#[test]
fn criterion_4d_wilks_and_chi2_exactness() {
    // wilks(f, f) = 0 exactly
    let params = LpplParams::nonlinear(300.0, 0.3, 7.0, 0.0, 0.0, 1.0).with_abc(5.0, -0.4, 0.05);
    let residuals = model::ResidualVector::from_values(vec![0.01, -0.02, 0.005, 0.0, 0.013]);
    let fit = FitResult {
        spec: ModelSpec::M0,
        params,
        cost: residuals.cost(),
        rms: residuals.rms,
        residuals,
        diagnostics: model::check_bubble_conditions(&params),
        boundary_ok: true,
        n_starts_tried: 1,
        seed: 0,
    };
    let same = FitResult {
        spec: ModelSpec::M1,
        ..fit.clone()
    };
    let w = stats::wilks_test(&fit, &same).unwrap();
    assert_eq!(w.t_stat, 0.0);
    assert_eq!(w.p_value, 1.0);

    // chi2_sf(x, 2) = exp(-x/2) to <= 1e-12
    for i in 1..200 {
        let x = i as f64 * 0.15;
        let got = stats::chi2_sf(x, 2).unwrap();
        assert!((got - (-x / 2.0).exp()).abs() <= 1e-12, "x = {x}");
    }
    // chi2_sf(3.841, 1) = 0.0500 +- 0.0005
    let p = stats::chi2_sf(3.841, 1).unwrap();
    assert!((p - 0.05).abs() <= 0.0005, "p = {p}");

    line("4d", "PASS", "wilks(f,f) = 0; chi2 closed forms within tolerance");
}

#[test]
fn criterion_4e_unitroot_size_and_power() {
    let trials = 200;
    let n = 550;
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut walk_rejections_df = 0;
    let mut walk_rejections_pp = 0;
    let mut ar_rejections_df = 0;
    let mut ar_rejections_pp = 0;
    for _ in 0..trials {
        let mut walk = vec![0.0f64; n];
        let mut ar = vec![0.0f64; n];
        for t in 1..n {
            let e1: f64 = StandardNormal.sample(&mut rng);
            let e2: f64 = StandardNormal.sample(&mut rng);
            walk[t] = walk[t - 1] + e1;
            ar[t] = 0.5 * ar[t - 1] + e2;
        }
        walk_rejections_df += usize::from(stats::adf_test(&walk).unwrap().stationary);
        walk_rejections_pp += usize::from(stats::pp_test(&walk).unwrap().stationary);
        ar_rejections_df += usize::from(stats::adf_test(&ar).unwrap().stationary);
        ar_rejections_pp += usize::from(stats::pp_test(&ar).unwrap().stationary);
    }
    assert!(
        walk_rejections_df * 20 <= trials,
        "DF size: {walk_rejections_df}/{trials} > 5%"
    );
    assert!(
        walk_rejections_pp * 20 <= trials,
        "PP size: {walk_rejections_pp}/{trials} > 5%"
    );
    assert!(
        ar_rejections_df as f64 >= 0.95 * trials as f64,
        "DF power: {ar_rejections_df}/{trials} < 95%"
    );
    assert!(
        ar_rejections_pp as f64 >= 0.95 * trials as f64,
        "PP power: {ar_rejections_pp}/{trials} < 95%"
    );
    line(
        "4e",
        "PASS",
        &format!(
            "unit-root size {walk_rejections_df}&{walk_rejections_pp}/200 on walks, power {ar_rejections_df}&{ar_rejections_pp}/200 on AR(0.5)"
        ),
    );
}

#[test]
fn criterion_4f_bootstrap_determinism() {
    let n = 60;
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    let truth = LpplParams::nonlinear(75.0, 0.4, 7.0, 1.0, 0.0, 1.0).with_abc(4.0, -0.3, 0.04);
    let values: Vec<f64> = (0..n)
        .map(|t| {
            let e: f64 = StandardNormal.sample(&mut rng);
            model::eval_flppl(&truth, t as f64).unwrap().exp() * (1.0 + 0.01 * e)
        })
        .collect();
    let series = DiscountedSeries::from_values(
        lppl::timeseries::weekday_calendar(NaiveDate::from_ymd_opt(2000, 1, 3).unwrap(), n),
        values,
    );
    let cfg = BootstrapConfig {
        n_reps: 10,
        block_len: 25,
        seed: 31,
        n_starts: 8,
    };
    let a = stats::bootstrap_compare(ModelSpec::M0, ModelSpec::M1, &series, &cfg).unwrap();
    let b = stats::bootstrap_compare(ModelSpec::M0, ModelSpec::M1, &series, &cfg).unwrap();
    let ja = serde_json::to_string(&a).unwrap();
    let jb = serde_json::to_string(&b).unwrap();
    assert_eq!(ja, jb, "same seed must give byte-identical reports");
    line("4f", "PASS", "bootstrap reports byte-identical under a fixed seed");
}

#[test]
fn criterion_4g_hazard_nonnegativity_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    // b >= 0 half: hazard must stay above -1e-12 on a dense grid.
    for _ in 0..1000 {
        let m: f64 = rng.random_range(0.1..0.9);
        let omega: f64 = rng.random_range(0.5..30.0);
        let b = -rng.random_range(0.05..1.0);
        let cap = (-b * m) / (m * m + omega * omega).sqrt();
        let c_sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let c = c_sign * rng.random_range(0.0..1.0) * cap;
        let params = LpplParams::nonlinear(rng.random_range(100.0..400.0), m, omega, rng.random_range(0.0..std::f64::consts::TAU), 0.0, 1.0)
            .with_abc(3.0, b, c);
        let kappa = rng.random_range(0.2..1.0);
        for k in 0..4000 {
            let u = 1e-4 * (params.t_c / 1e-4).powf(k as f64 / 3999.0);
            let h = sim::hazard_rate(&params, kappa, params.t_c - u).unwrap_or_else(|e| {
                panic!("hazard must be nonnegative for b >= 0: {e} (params {params:?})")
            });
            assert!(h >= 0.0);
        }
    }
    // b < 0 half: a negative hazard day must exist on the grid.
    for _ in 0..1000 {
        let m: f64 = rng.random_range(0.1..0.9);
        let omega: f64 = rng.random_range(3.0..30.0); // a full oscillation fits the grid
        let b = -rng.random_range(0.05..1.0);
        let cap = (-b * m) / (m * m + omega * omega).sqrt();
        let c_sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let c = c_sign * (1.0 + rng.random_range(0.1..1.0)) * cap;
        let params = LpplParams::nonlinear(rng.random_range(100.0..400.0), m, omega, rng.random_range(0.0..std::f64::consts::TAU), 0.0, 1.0)
            .with_abc(3.0, b, c);
        let kappa = rng.random_range(0.2..1.0);
        let mut saw_negative = false;
        for k in 0..4000 {
            let u = 1e-4 * (params.t_c / 1e-4).powf(k as f64 / 3999.0);
            if matches!(
                sim::hazard_rate(&params, kappa, params.t_c - u),
                Err(sim::SimError::NegativeHazard { .. })
            ) {
                saw_negative = true;
                break;
            }
        }
        assert!(saw_negative, "b < 0 must yield a negative hazard day: {params:?}");
    }
    line("4g", "PASS", "hazard nonnegativity check over 2x1000 parameter draws");
}

// ------------------------------------------------------------------
// criterion 5 — census internal consistency on real data
// ------------------------------------------------------------------

#[test]
fn criterion_5_census_consistency() {
    let Some(dir) = data_dir() else {
        line(
            "5",
            "SKIP",
            "case-study data not present; run scripts/fetch_data.sh",
        );
        return;
    };
    if !full_mode() {
        line(
            "5",
            "SKIP",
            "multi-hour census; set LPPL_ACCEPT_FULL=1 to run",
        );
        return;
    }
    // Window lengths per market, as in the published census.
    let setups = [("HSI", "hsi.csv", 550usize), ("GSPC", "gspc.csv", 250), ("SSEC", "ssec.csv", 175)];
    let cols = ColumnSpec::default();
    let rates = load_rate_csv(dir.join("dtb3.csv"), &cols, RateUnits::Percent).unwrap();
    let mut failures = Vec::new();
    for (label, file, length) in setups {
        let prices = load_price_csv(dir.join(file), &cols, label).unwrap();
        for spec in [ModelSpec::M0, ModelSpec::M1, ModelSpec::M2, ModelSpec::M3] {
            let census = rolling_scan(&prices, &rates, spec, length, 25, 16, 5_150, 0).unwrap();
            let pp = census.fraction_stationary_pp();
            let df = census.fraction_stationary_df();
            if pp <= 0.85 || df <= 0.85 {
                failures.push(format!(
                    "{label} {spec}: stationary fractions pp {pp:.3} df {df:.3} <= 0.85"
                ));
            }
            if let Some(sub) = census.fraction_lppl_stationary_pp() {
                if sub + 1e-12 < pp {
                    failures.push(format!(
                        "{label} {spec}: LPPL-subset pp {sub:.3} below overall {pp:.3}"
                    ));
                }
            }
            if let Some(sub) = census.fraction_lppl_stationary_df() {
                if sub + 1e-12 < df {
                    failures.push(format!(
                        "{label} {spec}: LPPL-subset df {sub:.3} below overall {df:.3}"
                    ));
                }
            }
        }
    }
    if failures.is_empty() {
        line("5", "PASS", "census fractions exceed 85% and LPPL subset is no worse");
    } else {
        line("5", "FAIL", &failures.join("; "));
        panic!("criterion 5 failed: {failures:?}");
    }
}
