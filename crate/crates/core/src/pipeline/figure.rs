//! Data behind the trend-break figures.

use std::path::Path;

use crate::error::{Error, Result};
use crate::series::{log_transform, MonthlySeries, Transform};
use crate::trend_break::{CounterfactualPath, TrendBreakFit};

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// `month,observed,fitted_pre,fitted_post,counterfactual`, one row per month
/// of the fit window and projection horizon. `series` may be in levels or
/// already in the fit's transform.
pub fn figure_csv(
    fit: &TrendBreakFit<f64>,
    counterfactual: Option<&CounterfactualPath<f64>>,
    series: &MonthlySeries<f64>,
) -> Result<String> {
    let window = fit.spec.window();
    let mut months = window;
    if let Some((last, _)) = counterfactual.and_then(CounterfactualPath::last) {
        months.end = months.end.max(last);
    }
    let data = series.window(&months);
    let data = if fit.transform == Transform::Log && data.transform() == Transform::Levels {
        log_transform(&data).series
    } else {
        data
    };
    let cutoff = fit.spec.cutoff_month;

    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["month", "observed", "fitted_pre", "fitted_post", "counterfactual"])?;
    for m in months.iter() {
        let t = m.since(cutoff);
        let inside = window.contains(m);
        let post = fit.spec.is_post(t);
        wtr.write_record([
            m.to_string(),
            cell(data.get(m)),
            cell((inside && !post).then(|| fit.pre_line(t))),
            cell((inside && post).then(|| fit.post_line(t))),
            cell(counterfactual.and_then(|p| p.value_at(m))),
        ])?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::Degenerate(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Degenerate(e.to_string()))
}

pub fn export_figure_data(
    fit: &TrendBreakFit<f64>,
    counterfactual: Option<&CounterfactualPath<f64>>,
    series: &MonthlySeries<f64>,
    path: &Path,
) -> Result<()> {
    let text = figure_csv(fit, counterfactual, series)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
