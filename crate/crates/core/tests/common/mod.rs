#![allow(dead_code)]

use std::path::PathBuf;

use breaklens::month::{Month, MonthRange};
use breaklens::series::MonthlySeries;
use breaklens::trend_break::TrendBreakSpec;
use breaklens::Transform;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn aug17() -> Month {
    Month::new(2017, 8).unwrap()
}

pub fn levels_spec() -> TrendBreakSpec {
    TrendBreakSpec::new(aug17(), Transform::Levels)
}

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Series over the configured window with `pre(t)` before the cutoff and
/// `post(t)` from it on.
pub fn piecewise(spec: &TrendBreakSpec, pre: impl Fn(f64) -> f64, post: impl Fn(f64) -> f64) -> MonthlySeries<f64> {
    let w = spec.window();
    let vals: Vec<f64> = w
        .iter()
        .map(|m| {
            let t = m.since(spec.cutoff_month) as f64;
            if spec.is_post(t as i32) {
                post(t)
            } else {
                pre(t)
            }
        })
        .collect();
    MonthlySeries::from_values(w.start, &vals, "synthetic")
}

/// Random broken trend plus Gaussian noise, with random scale.
pub fn random_series(spec: &TrendBreakSpec, r: &mut ChaCha8Rng) -> MonthlySeries<f64> {
    let a0 = r.random_range(20.0..150.0);
    let a1 = r.random_range(-50.0..50.0);
    let a2 = r.random_range(-3.0..3.0);
    let a3 = r.random_range(-3.0..3.0);
    let sd = r.random_range(0.5..20.0);
    let noise = Normal::new(0.0, sd).unwrap();
    let w = spec.window();
    let vals: Vec<f64> = w
        .iter()
        .map(|m| {
            let t = m.since(spec.cutoff_month) as f64;
            let d = if t >= 0.0 { 1.0 } else { 0.0 };
            a0 + a1 * d + a2 * t + a3 * t * d + noise.sample(r)
        })
        .collect();
    MonthlySeries::from_values(w.start, &vals, "random")
}

/// Coefficients and classical standard errors from `(X'X)^-1 X'y`.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let k = x[0].len();
    let xm = DMatrix::from_fn(n, k, |i, j| x[i][j]);
    let yv = DVector::from_column_slice(y);
    let xtx = xm.transpose() * &xm;
    let inv = xtx.try_inverse().expect("full rank");
    let beta = &inv * xm.transpose() * &yv;
    let resid = &yv - &xm * &beta;
    let s2 = resid.dot(&resid) / (n - k) as f64;
    let se = (0..k).map(|j| (s2 * inv[(j, j)]).sqrt()).collect();
    (beta.iter().copied().collect(), se)
}

/// Least squares through the SVD, for designs too ill-conditioned for the
/// normal equations (high powers of a small running variable).
pub fn svd_least_squares(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let xm = DMatrix::from_fn(x.len(), x[0].len(), |i, j| x[i][j]);
    let sol = xm
        .svd(true, true)
        .solve(&DVector::from_column_slice(y), 1e-14)
        .expect("svd solve");
    sol.iter().copied().collect()
}

pub fn month_range(a: (i32, u32), b: (i32, u32)) -> MonthRange {
    MonthRange::new(Month::new(a.0, a.1).unwrap(), Month::new(b.0, b.1).unwrap()).unwrap()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
