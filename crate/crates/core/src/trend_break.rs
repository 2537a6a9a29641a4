//! Interrupted-trend regression around a known cutoff month.
//!
//! The model is `y = a0 + a1 D + a2 t + a3 t D` with `t` in months relative
//! to the cutoff (the cutoff month is `t = 0`) and `D` the post-cutoff
//! indicator. `a1` is the jump in level at the cutoff and `a3` the change in
//! monthly slope.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::month::{Month, MonthRange};
use crate::ols::{ols, Coefficient, CovarianceKind};
use crate::scalar::Scalar;
use crate::series::{log_transform, MonthlySeries, Transform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendBreakSpec {
    pub cutoff_month: Month,
    pub pre_window: u32,
    pub post_window: u32,
    pub transform: Transform,
    pub treat_cutoff_as_post: bool,
    #[serde(default)]
    pub covariance: CovarianceKind,
}

impl TrendBreakSpec {
    /// 28 months before the cutoff, 29 from the cutoff on.
    pub fn new(cutoff_month: Month, transform: Transform) -> Self {
        TrendBreakSpec {
            cutoff_month,
            pre_window: 28,
            post_window: 29,
            transform,
            treat_cutoff_as_post: true,
            covariance: CovarianceKind::Classical,
        }
    }

    pub fn with_windows(mut self, pre: u32, post: u32) -> Self {
        self.pre_window = pre;
        self.post_window = post;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.pre_window < 3 || self.post_window < 3 {
            return Err(Error::invalid(
                "trend-break spec",
                format!(
                    "windows must be at least 3 months (pre {}, post {})",
                    self.pre_window, self.post_window
                ),
            ));
        }
        Ok(())
    }

    pub fn first_t(&self) -> i32 {
        -(self.pre_window as i32)
    }

    pub fn last_t(&self) -> i32 {
        self.post_window as i32 - 1
    }

    pub fn window(&self) -> MonthRange {
        MonthRange {
            start: self.cutoff_month.offset(self.first_t()),
            end: self.cutoff_month.offset(self.last_t()),
        }
    }

    pub fn is_post(&self, t: i32) -> bool {
        if self.treat_cutoff_as_post {
            t >= 0
        } else {
            t > 0
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrendBreakFit<T> {
    pub spec: TrendBreakSpec,
    /// Transform of the data actually fitted.
    pub transform: Transform,
    pub alpha0: Coefficient<T>,
    pub alpha1: Coefficient<T>,
    pub alpha2: Coefficient<T>,
    pub alpha3: Coefficient<T>,
    pub r_squared: T,
    /// Months (relative to the cutoff) of the observations used.
    pub t: Vec<i32>,
    pub observed: Vec<T>,
    pub fitted: Vec<T>,
    pub residuals: Vec<T>,
    pub n_pre: usize,
    pub n_post: usize,
    pub df_resid: usize,
}

impl<T: Scalar> TrendBreakFit<T> {
    pub fn coefficients(&self) -> [Coefficient<T>; 4] {
        [self.alpha0, self.alpha1, self.alpha2, self.alpha3]
    }

    /// Pre-cutoff line `a0 + a2 t`.
    pub fn pre_line(&self, t: i32) -> T {
        self.alpha0.estimate + self.alpha2.estimate * T::of_i64(t as i64)
    }

    /// Post-cutoff line `(a0 + a1) + (a2 + a3) t`.
    pub fn post_line(&self, t: i32) -> T {
        let t = T::of_i64(t as i64);
        self.alpha0.estimate + self.alpha1.estimate + (self.alpha2.estimate + self.alpha3.estimate) * t
    }

    pub fn n_used(&self) -> usize {
        self.t.len()
    }
}

/// Applies the requested transform unless the series already carries it.
fn prepare<T: Scalar>(series: &MonthlySeries<T>, transform: Transform) -> MonthlySeries<T> {
    match (transform, series.transform()) {
        (Transform::Log, Transform::Levels) => log_transform(series).series,
        _ => series.clone(),
    }
}

fn collect_window<T: Scalar>(series: &MonthlySeries<T>, spec: &TrendBreakSpec) -> Result<Vec<(i32, T)>> {
    let window = spec.window();
    if !series.covers(&window) {
        return Err(Error::InsufficientData {
            context: format!(
                "{}: series does not cover {}..{}",
                series.meta.name, window.start, window.end
            ),
            needed: window.len(),
            found: series.len(),
        });
    }
    Ok(window
        .iter()
        .filter_map(|m| series.get(m).map(|v| (m.since(spec.cutoff_month), v)))
        .collect())
}

/// OLS fit of the four-parameter interrupted-trend model on the configured window.
///
/// Missing months are dropped; `t` keeps calendar spacing.
pub fn fit_trend_break<T: Scalar>(series: &MonthlySeries<T>, spec: &TrendBreakSpec) -> Result<TrendBreakFit<T>> {
    spec.validate()?;
    let data = prepare(series, spec.transform);
    let obs = collect_window(&data, spec)?;
    if obs.len() < 5 {
        return Err(Error::InsufficientData {
            context: format!("trend break on {}", data.meta.name),
            needed: 5,
            found: obs.len(),
        });
    }

    let design = Matrix::from_fn(obs.len(), 4, |i, j| {
        let t = T::of_i64(obs[i].0 as i64);
        let d = if spec.is_post(obs[i].0) { T::one() } else { T::zero() };
        match j {
            0 => T::one(),
            1 => d,
            2 => t,
            _ => t * d,
        }
    });
    let y: Vec<T> = obs.iter().map(|o| o.1).collect();
    let fit = ols(&design, &y, spec.covariance).map_err(|_| Error::RankDeficient {
        context: format!(
            "trend break on {} ({} observations, window {}..{})",
            data.meta.name,
            obs.len(),
            spec.window().start,
            spec.window().end
        ),
    })?;

    let n_post = obs.iter().filter(|o| spec.is_post(o.0)).count();
    let c = &fit.coefficients;
    Ok(TrendBreakFit {
        spec: *spec,
        transform: data.transform(),
        alpha0: c[0],
        alpha1: c[1],
        alpha2: c[2],
        alpha3: c[3],
        r_squared: fit.r_squared,
        t: obs.iter().map(|o| o.0).collect(),
        observed: y,
        fitted: fit.fitted,
        residuals: fit.residuals,
        n_pre: obs.len() - n_post,
        n_post,
        df_resid: fit.df_resid,
    })
}

/// Pre-cutoff trend extended past the cutoff.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CounterfactualPath<T> {
    pub cutoff_month: Month,
    pub transform: Transform,
    /// `(t, month, a0 + a2 t)` for `t = 0..=horizon`.
    pub points: Vec<(i32, Month, T)>,
    /// First month with a negative projection (levels only).
    pub zero_crossing_month: Option<Month>,
    alpha1: T,
    alpha3: T,
    /// Projections within this of zero count as zero, not negative.
    tolerance: T,
}

impl<T: Scalar> CounterfactualPath<T> {
    /// Fitted post line minus counterfactual: `a1 + a3 t`.
    pub fn gap(&self, t: i32) -> T {
        self.alpha1 + self.alpha3 * T::of_i64(t as i64)
    }

    pub fn value_at(&self, month: Month) -> Option<T> {
        self.points.iter().find(|p| p.1 == month).map(|p| p.2)
    }

    fn first_negative(&self) -> Option<&(i32, Month, T)> {
        self.points.iter().find(|p| p.2 < -self.tolerance)
    }

    pub fn last(&self) -> Option<(Month, T)> {
        self.points.last().map(|p| (p.1, p.2))
    }

    /// Projection mapped back to USD millions (`exp` for log paths).
    pub fn levels_equivalent(&self) -> Vec<(Month, T)> {
        self.points
            .iter()
            .map(|&(_, m, v)| match self.transform {
                Transform::Levels => (m, v),
                Transform::Log => (m, v.exp()),
            })
            .collect()
    }
}

pub fn counterfactual_projection<T: Scalar>(fit: &TrendBreakFit<T>, horizon: u32) -> CounterfactualPath<T> {
    let cutoff = fit.spec.cutoff_month;
    let points: Vec<(i32, Month, T)> = (0..=horizon as i32)
        .map(|t| (t, cutoff.offset(t), fit.pre_line(t)))
        .collect();
    let scale = fit.alpha0.estimate.abs() + fit.alpha2.estimate.abs() * T::of_i64(horizon as i64);
    let mut path = CounterfactualPath {
        cutoff_month: cutoff,
        transform: fit.transform,
        points,
        zero_crossing_month: None,
        alpha1: fit.alpha1.estimate,
        alpha3: fit.alpha3.estimate,
        tolerance: T::of(256.0) * T::epsilon() * scale,
    };
    if fit.transform == Transform::Levels {
        path.zero_crossing_month = path.first_negative().map(|p| p.1);
    }
    path
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum Feasibility {
    Feasible,
    /// First month (and its `t`) where projected imports are negative.
    InfeasibleAt {
        month: Month,
        t: i32,
    },
}

pub fn feasibility_check<T: Scalar>(path: &CounterfactualPath<T>) -> Result<Feasibility> {
    if path.transform != Transform::Levels {
        return Err(Error::FeasibilityOnLog);
    }
    Ok(path
        .first_negative()
        .map_or(Feasibility::Feasible, |p| Feasibility::InfeasibleAt {
            month: p.1,
            t: p.0,
        }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Pre,
    Post,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentTrend<T> {
    pub intercept: T,
    pub slope: Coefficient<T>,
    pub n: usize,
}

/// Simple OLS line on one side of the cutoff within the configured window.
pub fn segment_trend<T: Scalar>(
    series: &MonthlySeries<T>,
    spec: &TrendBreakSpec,
    side: Side,
) -> Result<SegmentTrend<T>> {
    spec.validate()?;
    let data = prepare(series, spec.transform);
    let obs: Vec<(i32, T)> = collect_window(&data, spec)?
        .into_iter()
        .filter(|o| spec.is_post(o.0) == (side == Side::Post))
        .collect();
    if obs.len() < 3 {
        return Err(Error::InsufficientData {
            context: format!("{side:?} segment trend on {}", data.meta.name),
            needed: 3,
            found: obs.len(),
        });
    }
    let design = Matrix::from_fn(
        obs.len(),
        2,
        |i, j| {
            if j == 0 {
                T::one()
            } else {
                T::of_i64(obs[i].0 as i64)
            }
        },
    );
    let y: Vec<T> = obs.iter().map(|o| o.1).collect();
    let fit = ols(&design, &y, spec.covariance).map_err(|_| Error::RankDeficient {
        context: format!("{side:?} segment trend on {}", data.meta.name),
    })?;
    Ok(SegmentTrend {
        intercept: fit.coefficients[0].estimate,
        slope: fit.coefficients[1],
        n: obs.len(),
    })
}

/// Percent change per year implied by a monthly log slope: `100 (e^{12b} - 1)`.
pub fn annualize_log_slope<T: Scalar>(b: T) -> T {
    T::of(100.0) * ((T::of(12.0) * b).exp() - T::one())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn aug17() -> Month {
        Month::new(2017, 8).unwrap()
    }

    fn piecewise(spec: &TrendBreakSpec, pre: impl Fn(f64) -> f64, post: impl Fn(f64) -> f64) -> MonthlySeries<f64> {
        let w = spec.window();
        let vals: Vec<f64> = w
            .iter()
            .map(|m| {
                let t = m.since(spec.cutoff_month);
                if spec.is_post(t) {
                    post(t as f64)
                } else {
                    pre(t as f64)
                }
            })
            .collect();
        MonthlySeries::from_values(w.start, &vals, "synthetic")
    }

    #[test]
    fn noiseless_piecewise_recovers_coefficients() {
        let spec = TrendBreakSpec::new(aug17(), Transform::Levels);
        let s = piecewise(&spec, |t| 10.0 - 0.5 * t, |t| 12.0 + 0.2 * t);
        let fit = fit_trend_break(&s, &spec).unwrap();
        let got = fit.coefficients().map(|c| c.estimate);
        for (g, want) in got.iter().zip([10.0, 2.0, -0.5, 0.7]) {
            assert!((g - want).abs() < 1e-10, "{got:?}");
        }
        assert!(fit.residuals.iter().all(|e| e.abs() < 1e-10));
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!((fit.n_pre, fit.n_post), (28, 29));
    }

    #[test]
    fn constant_series_has_no_break() {
        let spec = TrendBreakSpec::new(aug17(), Transform::Levels);
        let s = piecewise(&spec, |_| 4.0, |_| 4.0);
        let fit = fit_trend_break(&s, &spec).unwrap();
        for c in [fit.alpha1, fit.alpha2, fit.alpha3] {
            assert!(c.estimate.abs() < 1e-12);
        }
    }

    #[test]
    fn cutoff_assignment_switch() {
        let mut spec = TrendBreakSpec::new(aug17(), Transform::Levels);
        assert!(spec.is_post(0));
        spec.treat_cutoff_as_post = false;
        assert!(!spec.is_post(0));
        let s = piecewise(&spec, |t| 1.0 + t, |t| 5.0 + 2.0 * t);
        let fit = fit_trend_break(&s, &spec).unwrap();
        assert_eq!((fit.n_pre, fit.n_post), (29, 28));
        assert!((fit.alpha1.estimate - 4.0).abs() < 1e-10);
    }

    #[test]
    fn invalid_windows_and_coverage() {
        let spec = TrendBreakSpec::new(aug17(), Transform::Levels).with_windows(2, 10);
        let s = MonthlySeries::from_values(aug17().offset(-40), &[1.0; 80], "x");
        assert!(matches!(fit_trend_break(&s, &spec), Err(Error::InvalidInput { .. })));
        let spec = TrendBreakSpec::new(aug17(), Transform::Levels);
        let short = MonthlySeries::from_values(aug17(), &[1.0; 29], "x");
        assert!(matches!(
            fit_trend_break(&short, &spec),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn all_pre_missing_is_rank_deficient() {
        let spec = TrendBreakSpec::new(aug17(), Transform::Levels);
        let w = spec.window();
        let vals: Vec<Option<f64>> = w
            .iter()
            .map(|m| (m >= aug17()).then(|| 3.0 + m.since(aug17()) as f64))
            .collect();
        let s = MonthlySeries::new(w.start, vals, Default::default());
        assert!(matches!(fit_trend_break(&s, &spec), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn counterfactual_examples() {
        let spec = TrendBreakSpec::new(aug17(), Transform::Levels);
        let s = piecewise(&spec, |t| 10.0 - 0.5 * t, |t| 12.0 + 0.2 * t);
        let fit = fit_trend_break(&s, &spec).unwrap();
        let path = counterfactual_projection(&fit, 10);
        assert_eq!(path.points.len(), 11);
        assert!((path.points[10].2 - 5.0).abs() < 1e-10);
        assert_eq!(path.zero_crossing_month, None);
        assert!((path.gap(0) - fit.alpha1.estimate).abs() < 1e-15);

        let long = counterfactual_projection(&fit, 28);
        assert_eq!(long.zero_crossing_month, Some(aug17().offset(21)));
        assert_eq!(
            feasibility_check(&long).unwrap(),
            Feasibility::InfeasibleAt {
                month: aug17().offset(21),
                t: 21
            }
        );
    }

    #[test]
    fn zero_slope_is_feasible_constant() {
        let spec = TrendBreakSpec::new(aug17(), Transform::Levels);
        let s = piecewise(&spec, |_| 3.0, |_| 8.0);
        let fit = fit_trend_break(&s, &spec).unwrap();
        let path = counterfactual_projection(&fit, 28);
        assert!(path.points.iter().all(|p| (p.2 - 3.0).abs() < 1e-10));
        assert_eq!(feasibility_check(&path).unwrap(), Feasibility::Feasible);
    }

    #[test]
    fn feasibility_rejects_log_paths() {
        let spec = TrendBreakSpec::new(aug17(), Transform::Log);
        let s = piecewise(&spec, |t| (5.0 - 0.1 * t).exp(), |t| (4.0 + 0.01 * t).exp());
        let fit = fit_trend_break(&s, &spec).unwrap();
        assert_eq!(fit.transform, Transform::Log);
        let path = counterfactual_projection(&fit, 28);
        assert!(matches!(feasibility_check(&path), Err(Error::FeasibilityOnLog)));
        let lv = path.levels_equivalent();
        assert!((lv[28].1 - (5.0f64 - 2.8).exp()).abs() < 1e-8);
    }

    #[test]
    fn segment_trend_on_exact_line() {
        let spec = TrendBreakSpec::new(aug17(), Transform::Levels);
        let s = piecewise(&spec, |t| 2.0 - 0.3 * t, |t| 1.0 + 0.7 * t);
        let pre = segment_trend(&s, &spec, Side::Pre).unwrap();
        let post = segment_trend(&s, &spec, Side::Post).unwrap();
        assert!((pre.slope.estimate + 0.3).abs() < 1e-12);
        assert!((post.slope.estimate - 0.7).abs() < 1e-12);
        assert_eq!((pre.n, post.n), (28, 29));
    }

    #[test]
    fn segment_trend_needs_three_points() {
        let spec = TrendBreakSpec::new(aug17(), Transform::Levels);
        let w = spec.window();
        let vals: Vec<Option<f64>> = w
            .iter()
            .map(|m| (m >= aug17() || m.since(aug17()) >= -2).then_some(1.0))
            .collect();
        let s = MonthlySeries::new(w.start, vals, Default::default());
        assert!(matches!(
            segment_trend(&s, &spec, Side::Pre),
            Err(Error::InsufficientData {
                needed: 3,
                found: 2,
                ..
            })
        ));
    }

    #[test]
    fn annualized_slopes() {
        assert!((annualize_log_slope(-0.09f64) + 66.0).abs() < 0.5);
        assert_eq!(annualize_log_slope(0.0f64), 0.0);
        assert!((annualize_log_slope(-0.05f64) - 100.0 * ((-0.6f64).exp() - 1.0)).abs() < 1e-12);
        assert!((annualize_log_slope(-0.05f64) + 45.1).abs() < 0.05);
    }
}
