//! Ordinary least squares with classical or lag-windowed covariance.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::linalg::{least_squares, Matrix, RankDeficient};
use crate::scalar::Scalar;

/// Estimate with its standard error and two-sided test against zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficient<T> {
    pub estimate: T,
    pub std_error: T,
    pub t_stat: T,
    pub p_value: T,
}

impl<T: Scalar> Coefficient<T> {
    /// Builds the test statistic and p-value from a Student t with `df`
    /// degrees of freedom (`None` for the standard normal).
    pub fn with_inference(estimate: T, std_error: T, df: Option<f64>) -> Self {
        let t_stat = estimate / std_error;
        let p = two_sided_p(t_stat.as_f64(), df);
        Coefficient {
            estimate,
            std_error,
            t_stat,
            p_value: T::of(p),
        }
    }
}

/// Two-sided p-value. NaN statistics (0/0) give NaN.
pub fn two_sided_p(t: f64, df: Option<f64>) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let upper = match df {
        Some(df) if df.is_finite() && df > 0.0 => StudentsT::new(0.0, 1.0, df).expect("valid Student t").sf(t.abs()),
        _ => Normal::standard().sf(t.abs()),
    };
    (2.0 * upper).min(1.0)
}

/// Upper `alpha/2` quantile of the standard normal.
pub fn normal_quantile(prob: f64) -> f64 {
    Normal::standard().inverse_cdf(prob)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CovarianceKind {
    /// Homoskedastic `s^2 (X'X)^{-1}`.
    #[default]
    Classical,
    /// Newey-West with Bartlett weights over `lags` neighbouring rows.
    NeweyWest { lags: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OlsFit<T> {
    pub coefficients: Vec<Coefficient<T>>,
    pub fitted: Vec<T>,
    pub residuals: Vec<T>,
    pub r_squared: T,
    pub df_resid: usize,
    /// Residual variance `RSS / (n - k)`.
    pub sigma2: T,
}

pub fn ols<T: Scalar>(design: &Matrix<T>, y: &[T], covariance: CovarianceKind) -> Result<OlsFit<T>, RankDeficient> {
    let n = design.rows();
    let k = design.cols();
    let ls = least_squares(design, y, None)?;
    let fitted = design.mul_vec(&ls.coefficients);
    let residuals: Vec<T> = y.iter().zip(&fitted).map(|(&a, &b)| a - b).collect();
    let rss: T = residuals.iter().map(|&e| e * e).sum();
    let mean = y.iter().copied().sum::<T>() / T::of_usize(n);
    let tss: T = y.iter().map(|&v| (v - mean) * (v - mean)).sum();
    let r_squared = if tss > T::zero() {
        T::one() - rss / tss
    } else {
        T::one()
    };
    let df_resid = n - k;
    let sigma2 = if df_resid > 0 {
        rss / T::of_usize(df_resid)
    } else {
        T::nan()
    };

    let cov = match covariance {
        CovarianceKind::Classical => Matrix::from_fn(k, k, |r, c| sigma2 * ls.gram_inverse.get(r, c)),
        CovarianceKind::NeweyWest { lags } => newey_west(design, &residuals, &ls.gram_inverse, lags),
    };

    let df = Some(df_resid as f64);
    let coefficients = (0..k)
        .map(|j| {
            let se = cov.get(j, j).max(T::zero()).sqrt();
            Coefficient::with_inference(ls.coefficients[j], se, df)
        })
        .collect();

    Ok(OlsFit {
        coefficients,
        fitted,
        residuals,
        r_squared,
        df_resid,
        sigma2,
    })
}

fn newey_west<T: Scalar>(x: &Matrix<T>, e: &[T], bread: &Matrix<T>, lags: usize) -> Matrix<T> {
    let n = x.rows();
    let k = x.cols();
    let mut meat = Matrix::zeros(k, k);
    for lag in 0..=lags.min(n.saturating_sub(1)) {
        let w = T::one() - T::of_usize(lag) / T::of_usize(lags + 1);
        for i in lag..n {
            let s = e[i] * e[i - lag];
            for r in 0..k {
                for c in 0..k {
                    let mut v = x.get(i, r) * x.get(i - lag, c);
                    if lag > 0 {
                        v += x.get(i - lag, r) * x.get(i, c);
                    }
                    meat.set(r, c, meat.get(r, c) + w * s * v);
                }
            }
        }
    }
    sandwich(bread, &meat)
}

/// `A M A` for symmetric `A`.
fn sandwich<T: Scalar>(a: &Matrix<T>, m: &Matrix<T>) -> Matrix<T> {
    let k = a.rows();
    let am: Matrix<T> = Matrix::from_fn(k, k, |r, c| (0..k).map(|j| a.get(r, j) * m.get(j, c)).sum());
    Matrix::from_fn(k, k, |r, c| (0..k).map(|j| am.get(r, j) * a.get(j, c)).sum())
}
