//! Sharp regression discontinuity with local polynomials.
//!
//! Each side of the cutoff gets its own kernel-weighted polynomial fit in
//! the running variable `x` (months from the cutoff for monthly series; the
//! right side includes `x = 0`). The level estimand is the jump in the
//! intercepts, the slope estimand the jump in first derivatives.
//!
//! Every estimate below is linear in the outcomes, so the code works with
//! explicit smoother weights `l_i` (estimate = `sum l_i y_i`). Conventional
//! and robust variances are then `sum l_i^2 s_i^2` for per-observation
//! variance estimates `s_i^2`.
//!
//! Bias correction follows the robust bias-corrected construction: the
//! leading bias of the order-`p` fit at bandwidth `h` is
//! `sum_i l_i x_i^(p+1) * g`, where `g` is the `x^(p+1)` coefficient of an
//! order-`p+1` fit at a pilot bandwidth `b >= h`. The corrected estimator
//! is again linear in `y`, and its variance (which includes the variability
//! of `g`) gives the robust standard error.
//!
//! Monthly data make the running variable discrete with one observation per
//! month. Estimates proceed as if it were continuous; effective sample
//! sizes per side are reported so thin windows are visible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{least_squares, LeastSquares, Matrix};
use crate::month::{Month, MonthRange};
use crate::ols::{normal_quantile, two_sided_p};
use crate::scalar::{factorial, Scalar};
use crate::series::MonthlySeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    #[default]
    Triangular,
    Uniform,
}

impl Kernel {
    /// `int_0^1 K(u) u^k du`.
    fn moment(self, k: usize) -> f64 {
        let k = k as f64;
        match self {
            Kernel::Triangular => 1.0 / ((k + 1.0) * (k + 2.0)),
            Kernel::Uniform => 1.0 / (k + 1.0),
        }
    }

    /// `int_0^1 K(u)^2 u^k du`.
    fn square_moment(self, k: usize) -> f64 {
        let k = k as f64;
        match self {
            Kernel::Triangular => 2.0 / ((k + 1.0) * (k + 2.0) * (k + 3.0)),
            Kernel::Uniform => 1.0 / (k + 1.0),
        }
    }
}

/// Kernel weight at normalized distance `u`.
pub fn kernel_weight<T: Scalar>(u: T, kernel: Kernel) -> T {
    match kernel {
        Kernel::Triangular => (T::one() - u.abs()).max(T::zero()),
        Kernel::Uniform => {
            if u.abs() <= T::one() {
                T::one()
            } else {
                T::zero()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    Level,
    Slope,
}

impl Estimand {
    pub fn derivative_order(self) -> usize {
        match self {
            Estimand::Level => 0,
            Estimand::Slope => 1,
        }
    }

    pub fn default_order(self) -> usize {
        match self {
            Estimand::Level => 1,
            Estimand::Slope => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RdSide {
    Left,
    Right,
}

impl RdSide {
    fn label(self) -> &'static str {
        match self {
            RdSide::Left => "left",
            RdSide::Right => "right",
        }
    }

    fn contains<T: Scalar>(self, x: T) -> bool {
        match self {
            RdSide::Left => x < T::zero(),
            RdSide::Right => x >= T::zero(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule<T> {
    MseOptimal,
    Manual(T),
}

/// Per-observation variance used in the sandwich.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum VarianceEstimator {
    /// Squared residuals of the side fit, scaled by `n / (n - k)`.
    #[default]
    Residual,
    /// Squared deviation from the mean of the nearest same-side neighbours,
    /// scaled by `J / (J + 1)`.
    NearestNeighbor { neighbors: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RddSpec<T> {
    pub cutoff_month: Month,
    pub estimand: Estimand,
    pub poly_order: usize,
    pub kernel: Kernel,
    pub bandwidth: BandwidthRule<T>,
    pub bandwidth_sample: MonthRange,
    /// Pilot bandwidth `b = pilot_ratio * h`.
    pub pilot_ratio: T,
    pub variance: VarianceEstimator,
}

impl<T: Scalar> RddSpec<T> {
    pub fn new(cutoff_month: Month, estimand: Estimand, bandwidth_sample: MonthRange) -> Self {
        RddSpec {
            cutoff_month,
            estimand,
            poly_order: estimand.default_order(),
            kernel: Kernel::Triangular,
            bandwidth: BandwidthRule::MseOptimal,
            bandwidth_sample,
            pilot_ratio: T::of(1.5),
            variance: VarianceEstimator::Residual,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nu = self.estimand.derivative_order();
        if self.poly_order < nu {
            return Err(Error::invalid(
                "rdd spec",
                format!("polynomial order {} below derivative order {nu}", self.poly_order),
            ));
        }
        if let BandwidthRule::Manual(h) = self.bandwidth {
            if !(h > T::zero() && h.is_finite()) {
                return Err(Error::invalid(
                    "rdd spec",
                    format!("manual bandwidth {h} must be positive"),
                ));
            }
        }
        // Written negated so NaN is rejected.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.pilot_ratio >= T::one()) {
            return Err(Error::invalid(
                "rdd spec",
                format!("pilot ratio {} must be at least 1", self.pilot_ratio),
            ));
        }
        if let VarianceEstimator::NearestNeighbor { neighbors: 0 } = self.variance {
            return Err(Error::invalid("rdd spec", "nearest-neighbour variance needs J >= 1"));
        }
        Ok(())
    }
}

/// Running variable and outcome pairs, `x` measured from the cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct RdSample<T> {
    x: Vec<T>,
    y: Vec<T>,
}

impl<T: Scalar> RdSample<T> {
    pub fn new(x: Vec<T>, y: Vec<T>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::invalid("rd sample", "x and y lengths differ"));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::invalid("rd sample", "non-finite value"));
        }
        Ok(RdSample { x, y })
    }

    /// Present observations of `series` inside `range`, with `x` in months
    /// from `cutoff`.
    pub fn from_series(series: &MonthlySeries<T>, cutoff: Month, range: &MonthRange) -> Self {
        let (x, y) = series
            .observations()
            .filter(|(m, _)| range.contains(*m))
            .map(|(m, v)| (T::of_i64(m.since(cutoff) as i64), v))
            .unzip();
        RdSample { x, y }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x(&self) -> &[T] {
        &self.x
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn map_y(&self, f: impl Fn(T, T) -> T) -> Self {
        RdSample {
            x: self.x.clone(),
            y: self.x.iter().zip(&self.y).map(|(&x, &y)| f(x, y)).collect(),
        }
    }

    /// Reflects the running variable, `x -> -x`.
    pub fn mirrored(&self) -> Self {
        RdSample {
            x: self.x.iter().map(|&x| -x).collect(),
            y: self.y.clone(),
        }
    }

    fn side_indices(&self, side: RdSide) -> Vec<usize> {
        (0..self.len()).filter(|&i| side.contains(self.x[i])).collect()
    }

    /// Count of observations on `side` with positive kernel weight.
    pub fn effective_n(&self, side: RdSide, h: T, kernel: Kernel) -> usize {
        self.side_indices(side)
            .into_iter()
            .filter(|&i| kernel_weight(self.x[i] / h, kernel) > T::zero())
            .count()
    }
}

/// Kernel-weighted polynomial design on one side.
#[derive(Debug, Clone)]
struct LocalDesign<T> {
    idx: Vec<usize>,
    x: Vec<T>,
    y: Vec<T>,
    weights: Vec<T>,
    design: Matrix<T>,
    ls: LeastSquares<T>,
    h: T,
}

impl<T: Scalar> LocalDesign<T> {
    fn build(sample: &RdSample<T>, side: RdSide, order: usize, h: T, kernel: Kernel) -> Result<Self> {
        let mut idx = Vec::new();
        let mut weights = Vec::new();
        for i in sample.side_indices(side) {
            let w = kernel_weight(sample.x[i] / h, kernel);
            if w > T::zero() {
                idx.push(i);
                weights.push(w);
            }
        }
        if idx.len() < order + 1 {
            return Err(Error::InsufficientData {
                context: format!("order-{order} local fit on the {} side with h = {h}", side.label()),
                needed: order + 1,
                found: idx.len(),
            });
        }
        let x: Vec<T> = idx.iter().map(|&i| sample.x[i]).collect();
        let y: Vec<T> = idx.iter().map(|&i| sample.y[i]).collect();
        let design = Matrix::from_fn(idx.len(), order + 1, |r, c| (x[r] / h).powi(c as i32));
        let ls = least_squares(&design, &y, Some(&weights)).map_err(|_| Error::SingularDesign {
            side: side.label(),
            bandwidth: h.as_f64(),
        })?;
        Ok(LocalDesign {
            idx,
            x,
            y,
            weights,
            design,
            ls,
            h,
        })
    }

    fn order(&self) -> usize {
        self.design.cols() - 1
    }

    /// Coefficient on `x^j` in raw units.
    fn coefficient(&self, j: usize) -> T {
        self.ls.coefficients[j] / self.h.powi(j as i32)
    }

    /// Smoother weights of the raw `x^j` coefficient.
    fn coefficient_weights(&self, j: usize) -> Vec<T> {
        let scale = self.h.powi(j as i32);
        self.ls
            .coefficient_weights(&self.design, Some(&self.weights), j)
            .into_iter()
            .map(|l| l / scale)
            .collect()
    }

    fn residuals(&self) -> Vec<T> {
        let fitted = self.design.mul_vec(&self.ls.coefficients);
        self.y.iter().zip(fitted).map(|(&y, f)| y - f).collect()
    }
}

/// Local polynomial fit on one side: coefficients of `1, x, ..., x^p` in
/// raw units of the running variable, so `coefficients[j] * j!` is the
/// `j`-th derivative at the cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalPolyFit<T> {
    pub side: RdSide,
    pub order: usize,
    pub bandwidth: T,
    pub kernel: Kernel,
    pub coefficients: Vec<T>,
    pub n_effective: usize,
}

impl<T: Scalar> LocalPolyFit<T> {
    pub fn intercept(&self) -> T {
        self.coefficients[0]
    }

    pub fn derivative(&self, order: usize) -> T {
        self.coefficients[order] * factorial::<T>(order)
    }
}

pub fn local_poly_fit<T: Scalar>(
    sample: &RdSample<T>,
    side: RdSide,
    order: usize,
    h: T,
    kernel: Kernel,
) -> Result<LocalPolyFit<T>> {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(h > T::zero()) {
        return Err(Error::invalid("bandwidth", format!("{h} must be positive")));
    }
    let d = LocalDesign::build(sample, side, order, h, kernel)?;
    Ok(LocalPolyFit {
        side,
        order,
        bandwidth: h,
        kernel,
        coefficients: (0..=order).map(|j| d.coefficient(j)).collect(),
        n_effective: d.idx.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthMethod {
    MseOptimal,
    /// `n^(-1/(2p+3))` times the standard deviation of `x`, used when the
    /// curvature difference is zero.
    RuleOfThumb,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthChoice<T> {
    pub h: T,
    pub method: BandwidthMethod,
    /// Value before clipping.
    pub h_raw: T,
    pub clipped: bool,
    /// Leading bias constants per side (`h^(p+1-v)` factor removed).
    pub bias_left: T,
    pub bias_right: T,
    /// Leading variance constants per side (`h^-(1+2v)` factor removed).
    pub variance_left: T,
    pub variance_right: T,
}

/// One-sided kernel moment matrices for order `p` and derivative `nu`:
/// returns `(e' G^-1 L, e' G^-1 P G^-1 e)`.
fn kernel_constants(kernel: Kernel, side: RdSide, p: usize, nu: usize) -> Result<(f64, f64)> {
    let sign = |k: usize| match side {
        RdSide::Right => 1.0,
        RdSide::Left if k.is_multiple_of(2) => 1.0,
        RdSide::Left => -1.0,
    };
    let mu = |k: usize| sign(k) * kernel.moment(k);
    let psi = |k: usize| sign(k) * kernel.square_moment(k);
    let k = p + 1;
    let gamma = Matrix::from_fn(k, k, |r, c| mu(r + c));
    let unit: Vec<f64> = (0..k).map(|j| if j == nu { 1.0 } else { 0.0 }).collect();
    let z = least_squares(&gamma, &unit, None)
        .map_err(|_| Error::RankDeficient {
            context: "kernel moment matrix".into(),
        })?
        .coefficients;
    let bias: f64 = (0..k).map(|j| z[j] * mu(j + p + 1)).sum();
    let var: f64 = (0..k)
        .flat_map(|r| (0..k).map(move |c| (r, c)))
        .map(|(r, c)| z[r] * psi(r + c) * z[c])
        .sum();
    Ok((bias, var))
}

/// Side-level pieces of a global polynomial fit of `order` (`p + 2` for the
/// plug-in): `(x^(order-1) coefficient, residual variance near the cutoff, observations per unit of
/// x)`.
fn pilot_side<T: Scalar>(sample: &RdSample<T>, side: RdSide, order: usize, h_rot: T) -> Result<(T, T, T)> {
    let idx = sample.side_indices(side);
    if idx.len() < order + 2 {
        return Err(Error::InsufficientData {
            context: format!("global order-{order} pilot fit on the {} side", side.label()),
            needed: order + 2,
            found: idx.len(),
        });
    }
    let x: Vec<T> = idx.iter().map(|&i| sample.x[i]).collect();
    let y: Vec<T> = idx.iter().map(|&i| sample.y[i]).collect();
    let scale = x.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let design = Matrix::from_fn(x.len(), order + 1, |r, c| (x[r] / scale).powi(c as i32));
    let ls = least_squares(&design, &y, None).map_err(|_| Error::RankDeficient {
        context: format!("global pilot fit on the {} side", side.label()),
    })?;
    let curvature = ls.coefficients[order - 1] / scale.powi(order as i32 - 1);
    let fitted = design.mul_vec(&ls.coefficients);

    // Residual variance over the observations nearest the cutoff.
    let mut near: Vec<(T, T)> = x
        .iter()
        .zip(y.iter().zip(&fitted))
        .map(|(&xi, (&yi, &fi))| (xi.abs(), (yi - fi) * (yi - fi)))
        .collect();
    near.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
    let within = near.iter().filter(|(d, _)| *d <= h_rot).count();
    let m = within.max(order).min(near.len());
    let sigma2 = near[..m].iter().map(|e| e.1).sum::<T>() / T::of_usize(m);

    let lo = near.first().map(|e| e.0).unwrap_or_default();
    let hi = near.last().map(|e| e.0).unwrap_or_default();
    let density = T::of_usize(x.len() - 1) / (hi - lo);
    Ok((curvature, sigma2, density))
}

/// Per-side inputs and outputs of one plug-in step.
struct PlugIn<T> {
    h: T,
    bias: (T, T),
    variance: (T, T),
    /// False when the bias difference is below the outcome's resolution.
    identified: bool,
}

/// `h = [ (2v+1) (V_l + V_r) / (2 (p+1-v) (B_r - B_l)^2) ]^(1/(2p+3))`
/// from per-side `x^(p+1)` coefficients `g`, residual variances and
/// densities.
#[allow(clippy::too_many_arguments)]
fn plug_in<T: Scalar>(
    sample: &RdSample<T>,
    kernel: Kernel,
    p: usize,
    nu: usize,
    g: (T, T),
    sigma2: (T, T),
    density: (T, T),
) -> Result<PlugIn<T>> {
    let (cb_l, cv_l) = kernel_constants(kernel, RdSide::Left, p, nu)?;
    let (cb_r, cv_r) = kernel_constants(kernel, RdSide::Right, p, nu)?;
    let fact = factorial::<T>(nu);
    let bias = (fact * g.0 * T::of(cb_l), fact * g.1 * T::of(cb_r));
    let variance = (
        fact * fact * sigma2.0 * T::of(cv_l) / density.0,
        fact * fact * sigma2.1 * T::of(cv_r) / density.1,
    );
    let db = bias.1 - bias.0;
    let num = T::of_usize(2 * nu + 1) * (variance.0 + variance.1);
    let den = T::of_usize(2 * (p + 1 - nu)) * db * db;
    let h = (num / den).powf(T::one() / T::of_usize(2 * p + 3));

    // Curvature below floating-point resolution of the outcome counts as zero.
    let x_scale = sample.x.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let y_scale = sample
        .y
        .iter()
        .fold(T::zero(), |m, v| m.max(v.abs()))
        .max(T::min_positive_value());
    let resolution = T::of(1024.0) * T::epsilon() * y_scale;
    let identified = db.abs() * x_scale.powi((p + 1 - nu) as i32) > resolution && h.is_finite();
    Ok(PlugIn {
        h,
        bias,
        variance,
        identified,
    })
}

/// Smallest bandwidth giving each side at least `p + 2` observations with
/// positive weight.
fn minimum_bandwidth<T: Scalar>(sample: &RdSample<T>, p: usize, kernel: Kernel) -> Result<T> {
    let need = p + 2;
    let mut h_min = T::zero();
    for side in [RdSide::Left, RdSide::Right] {
        let mut d: Vec<T> = sample
            .side_indices(side)
            .into_iter()
            .map(|i| sample.x[i].abs())
            .collect();
        d.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        if d.len() < need {
            return Err(Error::InsufficientData {
                context: format!("bandwidth clipping on the {} side", side.label()),
                needed: need,
                found: d.len(),
            });
        }
        let edge = d[need - 1];
        let side_min = match kernel {
            Kernel::Uniform => edge,
            // Triangular weight is zero at |u| = 1: step past the edge point.
            Kernel::Triangular => match d[need..].iter().find(|&&v| v > edge) {
                Some(&next) => (edge + next) / T::of(2.0),
                None => edge * T::of(1.05) + T::epsilon(),
            },
        };
        if edge == T::zero() && kernel == Kernel::Triangular && side_min == T::zero() {
            return Err(Error::Degenerate("all running-variable values at the cutoff".into()));
        }
        h_min = h_min.max(side_min);
    }
    Ok(h_min)
}

fn rule_of_thumb<T: Scalar>(sample: &RdSample<T>, p: usize) -> T {
    let n = T::of_usize(sample.len());
    let mean = sample.x.iter().copied().sum::<T>() / n;
    let var = sample.x.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / (n - T::one());
    n.powf(-T::one() / T::of_usize(2 * p + 3)) * var.sqrt()
}

/// Plug-in MSE-optimal bandwidth on a sample.
///
/// Bias constants come from per-side global polynomials of order `p + 2`,
/// variances from their residuals near the cutoff, and kernel constants from
/// one-sided moment matrices:
///
/// `h = [ (2v+1) (V_l + V_r) / (2 (p+1-v) (B_r - B_l)^2) ]^(1/(2p+3))`
///
/// with `V_s` proportional to `sigma_s^2 / density_s`, so `h` scales as
/// `n^(-1/(2p+3))`. The result is clipped upward so that both sides keep at
/// least `p + 2` weighted observations.
pub fn select_bandwidth<T: Scalar>(
    sample: &RdSample<T>,
    p: usize,
    estimand: Estimand,
    kernel: Kernel,
) -> Result<BandwidthChoice<T>> {
    let nu = estimand.derivative_order();
    if p < nu {
        return Err(Error::invalid(
            "bandwidth selection",
            format!("order {p} below derivative {nu}"),
        ));
    }
    let h_rot = rule_of_thumb(sample, p);
    let (g_l, s2_l, d_l) = pilot_side(sample, RdSide::Left, p + 2, h_rot)?;
    let (g_r, s2_r, d_r) = pilot_side(sample, RdSide::Right, p + 2, h_rot)?;
    let main = plug_in(sample, kernel, p, nu, (g_l, g_r), (s2_l, s2_r), (d_l, d_r))?;
    let (method, h_raw) = if main.identified {
        (BandwidthMethod::MseOptimal, main.h)
    } else {
        log::warn!("zero curvature estimate; falling back to rule-of-thumb bandwidth {h_rot}");
        (BandwidthMethod::RuleOfThumb, h_rot)
    };

    let h_min = minimum_bandwidth(sample, p, kernel)?;
    let clipped = h_raw < h_min;
    Ok(BandwidthChoice {
        h: if clipped { h_min } else { h_raw },
        method,
        h_raw,
        clipped,
        bias_left: main.bias.0,
        bias_right: main.bias.1,
        variance_left: main.variance.0,
        variance_right: main.variance.1,
    })
}

fn check_monthly_span<T: Scalar>(sample: &RdSample<T>) -> Result<()> {
    for side in [RdSide::Left, RdSide::Right] {
        let idx = sample.side_indices(side);
        let (lo, hi) = idx.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &i| {
            (lo.min(sample.x[i]), hi.max(sample.x[i]))
        });
        let span = if idx.is_empty() {
            0
        } else {
            (hi - lo).as_f64().round() as usize + 1
        };
        if span < 24 {
            return Err(Error::InsufficientData {
                context: format!("bandwidth sample, {} side (months)", side.label()),
                needed: 24,
                found: span,
            });
        }
    }
    Ok(())
}

/// MSE-optimal bandwidth for a monthly series; the bandwidth sample must
/// span at least 24 months on each side.
pub fn select_bandwidth_mse<T: Scalar>(
    series: &MonthlySeries<T>,
    cutoff: Month,
    sample_range: &MonthRange,
    p: usize,
    estimand: Estimand,
    kernel: Kernel,
) -> Result<BandwidthChoice<T>> {
    let sample = RdSample::from_series(series, cutoff, sample_range);
    check_monthly_span(&sample)?;
    select_bandwidth(&sample, p, estimand, kernel)
}

/// Robust bias-corrected inference for one estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustInference<T> {
    pub tau_bc: T,
    /// Estimated leading bias; `tau_bc = tau - bias`.
    pub bias: T,
    pub se_robust: T,
    pub ci_robust: (T, T),
    pub p_robust: T,
    pub b_used: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RddFit<T> {
    pub estimand: Estimand,
    pub poly_order: usize,
    pub kernel: Kernel,
    pub tau: T,
    pub se_conventional: T,
    pub p_conventional: T,
    pub tau_bc: T,
    pub bias: T,
    pub se_robust: T,
    pub ci_robust: (T, T),
    pub p_robust: T,
    pub h_used: T,
    pub b_used: T,
    pub bandwidth_method: BandwidthMethod,
    pub n_left: usize,
    pub n_right: usize,
}

fn nearest_neighbor_variance<T: Scalar>(sample: &RdSample<T>, side: RdSide, j: usize) -> Vec<(usize, T)> {
    let mut idx = sample.side_indices(side);
    idx.sort_by(|&a, &b| sample.x[a].partial_cmp(&sample.x[b]).expect("finite"));
    let n = idx.len();
    let jj = j.min(n.saturating_sub(1));
    let mut out = Vec::with_capacity(n);
    for pos in 0..n {
        // Expand a window around `pos`, taking the closer neighbour each step.
        let (mut lo, mut hi) = (pos, pos);
        let mut sum = T::zero();
        let xi = sample.x[idx[pos]];
        for _ in 0..jj {
            let left = (lo > 0).then(|| (xi - sample.x[idx[lo - 1]]).abs());
            let right = (hi + 1 < n).then(|| (sample.x[idx[hi + 1]] - xi).abs());
            let take_left = match (left, right) {
                (Some(l), Some(r)) => l <= r,
                (Some(_), None) => true,
                _ => false,
            };
            if take_left {
                lo -= 1;
                sum += sample.y[idx[lo]];
            } else {
                hi += 1;
                sum += sample.y[idx[hi]];
            }
        }
        let s2 = if jj == 0 {
            T::zero()
        } else {
            let dev = sample.y[idx[pos]] - sum / T::of_usize(jj);
            T::of_usize(jj) / T::of_usize(jj + 1) * dev * dev
        };
        out.push((idx[pos], s2));
    }
    out
}

/// Per-observation variance estimates for the points of `design`.
fn observation_variances<T: Scalar>(
    sample: &RdSample<T>,
    side: RdSide,
    design: &LocalDesign<T>,
    estimator: VarianceEstimator,
) -> Vec<T> {
    match estimator {
        VarianceEstimator::Residual => {
            let n = design.idx.len();
            let k = design.order() + 1;
            let dof = if n > k {
                T::of_usize(n) / T::of_usize(n - k)
            } else {
                T::one()
            };
            design.residuals().into_iter().map(|e| e * e * dof).collect()
        }
        VarianceEstimator::NearestNeighbor { neighbors } => {
            let all = nearest_neighbor_variance(sample, side, neighbors);
            let lookup: std::collections::HashMap<usize, T> = all.into_iter().collect();
            design.idx.iter().map(|i| lookup[i]).collect()
        }
    }
}

struct SideEstimate<T> {
    estimate: T,
    variance: T,
    n: usize,
}

fn conventional_side<T: Scalar>(
    sample: &RdSample<T>,
    side: RdSide,
    spec: &RddSpec<T>,
    h: T,
) -> Result<SideEstimate<T>> {
    let nu = spec.estimand.derivative_order();
    let d = LocalDesign::build(sample, side, spec.poly_order, h, spec.kernel)?;
    let fact = factorial::<T>(nu);
    let l: Vec<T> = d.coefficient_weights(nu).into_iter().map(|w| w * fact).collect();
    let s2 = observation_variances(sample, side, &d, spec.variance);
    Ok(SideEstimate {
        estimate: d.coefficient(nu) * fact,
        variance: l.iter().zip(&s2).map(|(&w, &s)| w * w * s).sum(),
        n: d.idx.len(),
    })
}

struct SideCorrection<T> {
    bias: T,
    variance: T,
}

fn corrected_side<T: Scalar>(
    sample: &RdSample<T>,
    side: RdSide,
    spec: &RddSpec<T>,
    h: T,
    b: T,
) -> Result<SideCorrection<T>> {
    let nu = spec.estimand.derivative_order();
    let p = spec.poly_order;
    let fact = factorial::<T>(nu);
    let main = LocalDesign::build(sample, side, p, h, spec.kernel)?;
    let pilot = LocalDesign::build(sample, side, p + 1, b, spec.kernel).map_err(|e| match e {
        Error::InsufficientData { needed, found, .. } => Error::InsufficientData {
            context: format!("pilot window (b = {b}) on the {} side", side.label()),
            needed,
            found,
        },
        other => other,
    })?;

    let l: Vec<T> = main.coefficient_weights(nu).into_iter().map(|w| w * fact).collect();
    let lead: T = l.iter().zip(&main.x).map(|(&w, &x)| w * x.powi(p as i32 + 1)).sum();
    let g_weights = pilot.coefficient_weights(p + 1);
    let curvature = pilot.coefficient(p + 1);

    // Corrected smoother weights over the union of both windows (h <= b, so
    // the pilot window contains the main one).
    let mut combined: std::collections::BTreeMap<usize, T> = std::collections::BTreeMap::new();
    for (&i, &w) in main.idx.iter().zip(&l) {
        *combined.entry(i).or_default() += w;
    }
    for (&i, &g) in pilot.idx.iter().zip(&g_weights) {
        *combined.entry(i).or_default() -= lead * g;
    }
    let s2 = observation_variances(sample, side, &pilot, spec.variance);
    let s2_of: std::collections::HashMap<usize, T> = pilot.idx.iter().copied().zip(s2).collect();
    let variance = combined
        .iter()
        .map(|(i, &w)| w * w * s2_of.get(i).copied().unwrap_or_default())
        .sum();

    Ok(SideCorrection {
        bias: lead * curvature,
        variance,
    })
}

fn robust_on_sample<T: Scalar>(sample: &RdSample<T>, spec: &RddSpec<T>, tau: T, h: T) -> Result<RobustInference<T>> {
    let b = h * spec.pilot_ratio;
    let left = corrected_side(sample, RdSide::Left, spec, h, b)?;
    let right = corrected_side(sample, RdSide::Right, spec, h, b)?;
    let bias = right.bias - left.bias;
    let tau_bc = tau - bias;
    let se = (left.variance + right.variance).sqrt();
    let z = T::of(normal_quantile(0.975));
    Ok(RobustInference {
        tau_bc,
        bias,
        se_robust: se,
        ci_robust: (tau_bc - z * se, tau_bc + z * se),
        p_robust: T::of(two_sided_p((tau_bc / se).as_f64(), None)),
        b_used: b,
    })
}

/// Discontinuity estimate on a sample, with conventional and robust
/// bias-corrected inference.
pub fn rd_estimate_sample<T: Scalar>(sample: &RdSample<T>, spec: &RddSpec<T>) -> Result<RddFit<T>> {
    spec.validate()?;
    let (h, method) = match spec.bandwidth {
        BandwidthRule::Manual(h) => (h, BandwidthMethod::Manual),
        BandwidthRule::MseOptimal => {
            let c = select_bandwidth(sample, spec.poly_order, spec.estimand, spec.kernel)?;
            (c.h, c.method)
        }
    };
    let left = conventional_side(sample, RdSide::Left, spec, h)?;
    let right = conventional_side(sample, RdSide::Right, spec, h)?;
    let tau = right.estimate - left.estimate;
    let se = (left.variance + right.variance).sqrt();
    let robust = robust_on_sample(sample, spec, tau, h)?;
    Ok(RddFit {
        estimand: spec.estimand,
        poly_order: spec.poly_order,
        kernel: spec.kernel,
        tau,
        se_conventional: se,
        p_conventional: T::of(two_sided_p((tau / se).as_f64(), None)),
        tau_bc: robust.tau_bc,
        bias: robust.bias,
        se_robust: robust.se_robust,
        ci_robust: robust.ci_robust,
        p_robust: robust.p_robust,
        h_used: h,
        b_used: robust.b_used,
        bandwidth_method: method,
        n_left: left.n,
        n_right: right.n,
    })
}

/// Discontinuity at `spec.cutoff_month` using the observations of `series`
/// inside the configured bandwidth sample.
pub fn rd_estimate<T: Scalar>(series: &MonthlySeries<T>, spec: &RddSpec<T>) -> Result<RddFit<T>> {
    spec.validate()?;
    let sample = RdSample::from_series(series, spec.cutoff_month, &spec.bandwidth_sample);
    if spec.bandwidth == BandwidthRule::MseOptimal {
        check_monthly_span(&sample)?;
    }
    rd_estimate_sample(&sample, spec)
}

/// Recomputes the robust bias-corrected interval for an existing fit.
pub fn robust_bias_corrected_ci<T: Scalar>(
    series: &MonthlySeries<T>,
    spec: &RddSpec<T>,
    fit: &RddFit<T>,
) -> Result<RobustInference<T>> {
    spec.validate()?;
    let sample = RdSample::from_series(series, spec.cutoff_month, &spec.bandwidth_sample);
    robust_on_sample(&sample, spec, fit.tau, fit.h_used)
}
