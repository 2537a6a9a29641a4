//! Table cell formatting: `X.XX*** (S.SS)`.

use crate::ols::Coefficient;
use crate::scalar::Scalar;

/// `***` for p < 0.01, `**` for p < 0.05, `*` for p < 0.10.
pub fn stars(p: f64) -> &'static str {
    if !p.is_finite() {
        ""
    } else if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.10 {
        "*"
    } else {
        ""
    }
}

/// Two-decimal rendering without a negative zero.
pub fn fixed2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

pub fn format_estimate(estimate: f64, std_error: f64, p_value: f64) -> String {
    format!("{}{} ({})", fixed2(estimate), stars(p_value), fixed2(std_error))
}

pub fn format_cell<T: Scalar>(c: &Coefficient<T>) -> String {
    format_estimate(c.estimate.as_f64(), c.std_error.as_f64(), c.p_value.as_f64())
}
