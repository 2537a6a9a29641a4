mod common;

use breaklens::series::log_transform;
use breaklens::trend_break::{
    annualize_log_slope, counterfactual_projection, feasibility_check, fit_trend_break, segment_trend, Feasibility,
    Side,
};
use breaklens::{Error, Transform};
use common::*;

#[test]
fn matches_normal_equations_on_random_series() {
    let spec = levels_spec();
    let mut r = rng(11);
    let mut worst = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let s = random_series(&spec, &mut r);
        let fit = fit_trend_break(&s, &spec).unwrap();
        let x: Vec<Vec<f64>> = fit
            .t
            .iter()
            .map(|&t| {
                let t = t as f64;
                let d = if t >= 0.0 { 1.0 } else { 0.0 };
                vec![1.0, d, t, t * d]
            })
            .collect();
        let (beta, se) = normal_equations(&x, &fit.observed);
        for (j, c) in fit.coefficients().iter().enumerate() {
            worst.0 = worst.0.max((c.estimate - beta[j]).abs());
            worst.1 = worst.1.max((c.std_error - se[j]).abs());
        }
    }
    assert!(worst.0 < 1e-10 && worst.1 < 1e-10, "max deviations {worst:?}");
}

#[test]
fn equals_separate_segment_fits() {
    let spec = levels_spec();
    let mut r = rng(12);
    for _ in 0..100 {
        let s = random_series(&spec, &mut r);
        let fit = fit_trend_break(&s, &spec).unwrap();
        let pre = segment_trend(&s, &spec, Side::Pre).unwrap();
        let post = segment_trend(&s, &spec, Side::Post).unwrap();
        assert!(close(fit.alpha0.estimate, pre.intercept, 1e-9));
        assert!(close(fit.alpha2.estimate, pre.slope.estimate, 1e-9));
        assert!(close(fit.alpha0.estimate + fit.alpha1.estimate, post.intercept, 1e-9));
        assert!(close(
            fit.alpha2.estimate + fit.alpha3.estimate,
            post.slope.estimate,
            1e-9
        ));
        assert_eq!(pre.n + post.n, fit.n_used());
    }
}

#[test]
fn noiseless_piecewise_recovers_coefficients_and_zero_crossing() {
    let spec = levels_spec();
    let s = piecewise(&spec, |t| 10.0 - 0.5 * t, |t| 12.0 + 0.2 * t);
    let fit = fit_trend_break(&s, &spec).unwrap();
    let a = fit.coefficients().map(|c| c.estimate);
    for (got, want) in a.iter().zip([10.0, 2.0, -0.5, 0.7]) {
        assert!(close(*got, want, 1e-10), "{a:?}");
    }
    assert!(close(fit.r_squared, 1.0, 1e-12));
    assert!(fit.residuals.iter().all(|e| e.abs() < 1e-10));
    let path = counterfactual_projection(&fit, 28);
    assert_eq!(
        feasibility_check(&path).unwrap(),
        Feasibility::InfeasibleAt {
            month: aug17().offset(21),
            t: 21
        }
    );
}

#[test]
fn constant_series_has_no_break() {
    let spec = levels_spec();
    let s = piecewise(&spec, |_| 7.5, |_| 7.5);
    let fit = fit_trend_break(&s, &spec).unwrap();
    assert!(fit.alpha1.estimate.abs() < 1e-10);
    assert!(fit.alpha2.estimate.abs() < 1e-10);
    assert!(fit.alpha3.estimate.abs() < 1e-10);
}

#[test]
fn affine_and_scale_properties() {
    let spec = levels_spec();
    let mut r = rng(13);
    for _ in 0..20 {
        let s = random_series(&spec, &mut r);
        let base = fit_trend_break(&s, &spec).unwrap();
        // Adding a constant moves only the intercept.
        let shifted = fit_trend_break(&s.map(|v| v + 37.0), &spec).unwrap();
        assert!(close(shifted.alpha0.estimate, base.alpha0.estimate + 37.0, 1e-9));
        for (a, b) in [
            (shifted.alpha1, base.alpha1),
            (shifted.alpha2, base.alpha2),
            (shifted.alpha3, base.alpha3),
        ] {
            assert!(close(a.estimate, b.estimate, 1e-9));
            assert!(close(a.std_error, b.std_error, 1e-9));
        }
        // Scaling scales estimates and errors and leaves t statistics alone.
        let scaled = fit_trend_break(&s.map(|v| v * 4.0), &spec).unwrap();
        for (a, b) in scaled.coefficients().iter().zip(base.coefficients()) {
            assert!(close(a.estimate, 4.0 * b.estimate, 1e-8));
            assert!(close(a.std_error, 4.0 * b.std_error, 1e-8));
            assert!(close(a.t_stat, b.t_stat, 1e-8));
        }
    }
}

#[test]
fn log_spec_commutes_with_log_transform() {
    let levels = levels_spec();
    let log = breaklens::trend_break::TrendBreakSpec::new(aug17(), Transform::Log);
    let mut r = rng(14);
    for _ in 0..20 {
        let s = random_series(&levels, &mut r).map(|v| v.abs() + 1.0);
        let a = fit_trend_break(&s, &log).unwrap();
        let b = fit_trend_break(&log_transform(&s).series, &log).unwrap();
        let c = fit_trend_break(&log_transform(&s).series, &levels).unwrap();
        for ((x, y), z) in a.coefficients().iter().zip(b.coefficients()).zip(c.coefficients()) {
            assert_eq!(x, &y);
            assert_eq!(x, &z);
        }
    }
}

#[test]
fn log_feasibility_is_an_error() {
    let spec = breaklens::trend_break::TrendBreakSpec::new(aug17(), Transform::Log);
    let s = piecewise(&spec, |t| (3.0 - 0.05 * t).exp(), |t| (2.5 + 0.01 * t).exp());
    let fit = fit_trend_break(&s, &spec).unwrap();
    let path = counterfactual_projection(&fit, 28);
    assert!(matches!(feasibility_check(&path), Err(Error::FeasibilityOnLog)));
    assert_eq!(path.zero_crossing_month, None);
    let levels = path.levels_equivalent();
    assert!(close(levels[28].1, (3.0 - 0.05 * 28.0f64).exp(), 1e-9));
}

#[test]
fn all_post_window_is_rank_deficient() {
    let spec = levels_spec();
    let s = piecewise(&spec, |_| f64::NAN, |t| 3.0 + t);
    assert!(matches!(fit_trend_break(&s, &spec), Err(Error::RankDeficient { .. })));
}

#[test]
fn single_precision_tracks_double() {
    let spec = levels_spec();
    let s = random_series(&spec, &mut rng(15));
    let f64_fit = fit_trend_break(&s, &spec).unwrap();
    let f32_fit = fit_trend_break(&s.cast::<f32>(), &spec).unwrap();
    for (a, b) in f32_fit.coefficients().iter().zip(f64_fit.coefficients()) {
        assert!(close(a.estimate as f64, b.estimate, 1e-3 * (1.0 + b.estimate.abs())));
    }
}

#[test]
fn annualized_slope_anchor() {
    assert!(close(annualize_log_slope(-0.09f64), -66.04, 0.01));
    assert_eq!(annualize_log_slope(0.0f64), 0.0);
}
