//! Agreement between independently obtained series, and vintage search.

use std::io::Write;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{aggregate_as_of, format_timestamp, CategorySet, RawTradeRecord, VintagePolicy};
use crate::month::{Month, MonthRange};
use crate::ols::Coefficient;
use crate::scalar::Scalar;
use crate::series::MonthlySeries;
use crate::stars::format_cell;
use crate::trend_break::{fit_trend_break, TrendBreakSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesComparison<T> {
    pub correlation: T,
    /// Means of each argument over the overlap: `(a, b)`.
    pub mean_overall: (T, T),
    pub mean_pre: (T, T),
    pub mean_post: (T, T),
    pub max_abs_diff: T,
    pub rms_diff: T,
    pub n_overlap: usize,
}

fn mean<T: Scalar>(v: impl Iterator<Item = T>) -> T {
    let (s, n) = v.fold((T::zero(), 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        T::nan()
    } else {
        s / T::of_usize(n)
    }
}

fn overlap<T: Scalar>(a: &MonthlySeries<T>, b: &MonthlySeries<T>) -> Vec<(Month, T, T)> {
    a.observations()
        .filter_map(|(m, va)| b.get(m).map(|vb| (m, va, vb)))
        .collect()
}

/// Statistics over months where both series are present. Months at or after
/// `cutoff_month` are "post".
pub fn compare_series<T: Scalar>(
    a: &MonthlySeries<T>,
    b: &MonthlySeries<T>,
    cutoff_month: Month,
) -> Result<SeriesComparison<T>> {
    let pts = overlap(a, b);
    if pts.len() < 3 {
        return Err(Error::InsufficientData {
            context: format!("overlap of {} and {}", a.meta.name, b.meta.name),
            needed: 3,
            found: pts.len(),
        });
    }
    let ma = mean(pts.iter().map(|p| p.1));
    let mb = mean(pts.iter().map(|p| p.2));
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for &(_, x, y) in &pts {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == T::zero() || sbb == T::zero() {
        return Err(Error::Degenerate(format!(
            "constant series over the overlap of {} and {}",
            a.meta.name, b.meta.name
        )));
    }
    let correlation = (sab / (saa * sbb).sqrt()).max(-T::one()).min(T::one());
    let pre = |p: &&(Month, T, T)| p.0 < cutoff_month;
    let post = |p: &&(Month, T, T)| p.0 >= cutoff_month;
    let diffs = pts.iter().map(|p| (p.1 - p.2).abs());
    Ok(SeriesComparison {
        correlation,
        mean_overall: (ma, mb),
        mean_pre: (
            mean(pts.iter().filter(pre).map(|p| p.1)),
            mean(pts.iter().filter(pre).map(|p| p.2)),
        ),
        mean_post: (
            mean(pts.iter().filter(post).map(|p| p.1)),
            mean(pts.iter().filter(post).map(|p| p.2)),
        ),
        max_abs_diff: diffs.clone().fold(T::zero(), T::max),
        rms_diff: mean(diffs.map(|d| d * d)).sqrt(),
        n_overlap: pts.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    OneMinusCorrelation,
    RmsDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VintageSearchResult {
    /// Candidates in input order with their distance to the target.
    pub candidates: Vec<(DateTime<Utc>, f64)>,
    /// Minimum-distance candidate; ties go to the earliest date.
    pub best: DateTime<Utc>,
    pub distance_metric: DistanceMetric,
}

/// Weekly cutoffs from `first` through `last` inclusive.
pub fn weekly_candidates(first: DateTime<Utc>, last: DateTime<Utc>) -> Vec<DateTime<Utc>> {
    std::iter::successors(Some(first), |d| Some(*d + chrono::Duration::days(7)))
        .take_while(|d| *d <= last)
        .collect()
}

/// Reconstructs the category series under each candidate vintage and picks
/// the one closest to `target` over the target's span.
pub fn search_vintage_date(
    raw_records: &[RawTradeRecord],
    target: &MonthlySeries<f64>,
    candidate_dates: &[DateTime<Utc>],
    category_set: &CategorySet,
    metric: DistanceMetric,
) -> Result<VintageSearchResult> {
    if candidate_dates.len() < 2 {
        return Err(Error::invalid(
            "vintage search",
            format!("need at least 2 candidates, got {}", candidate_dates.len()),
        ));
    }
    let months: MonthRange = target
        .range()
        .ok_or_else(|| Error::invalid("vintage search", "empty target series"))?;
    let cutoff = months.start;
    let distances: Vec<Result<f64>> = candidate_dates
        .par_iter()
        .map(|&date| {
            let rebuilt = aggregate_as_of(raw_records, Some(&VintagePolicy::as_of(date)), category_set, &months);
            let cmp = compare_series(&rebuilt, target, cutoff)?;
            Ok(match metric {
                DistanceMetric::OneMinusCorrelation => 1.0 - cmp.correlation,
                DistanceMetric::RmsDifference => cmp.rms_diff,
            })
        })
        .collect();
    let candidates: Vec<(DateTime<Utc>, f64)> = candidate_dates
        .iter()
        .copied()
        .zip(distances)
        .map(|(d, r)| r.map(|v| (d, v)))
        .collect::<Result<_>>()?;
    let best = candidates
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|c| c.0)
        .expect("at least two candidates");
    Ok(VintageSearchResult {
        candidates,
        best,
        distance_metric: metric,
    })
}

/// Table rows pairing two series' trend-break results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientAudit<T> {
    pub level_change: (Coefficient<T>, Coefficient<T>),
    pub slope_change: (Coefficient<T>, Coefficient<T>),
    pub intercept: (Coefficient<T>, Coefficient<T>),
    pub pre_slope: (Coefficient<T>, Coefficient<T>),
    pub comparison: SeriesComparison<T>,
}

pub fn coefficient_audit<T: Scalar>(
    a: &MonthlySeries<T>,
    b: &MonthlySeries<T>,
    spec: &TrendBreakSpec,
) -> Result<CoefficientAudit<T>> {
    let fa = fit_trend_break(a, spec)?;
    let fb = fit_trend_break(b, spec)?;
    let window = spec.window();
    let comparison = compare_series(&a.window(&window), &b.window(&window), spec.cutoff_month)?;
    Ok(CoefficientAudit {
        level_change: (fa.alpha1, fb.alpha1),
        slope_change: (fa.alpha3, fb.alpha3),
        intercept: (fa.alpha0, fb.alpha0),
        pre_slope: (fa.alpha2, fb.alpha2),
        comparison,
    })
}

/// Writes audit blocks as a delimited table with the row structure
/// `series, row, first, second`.
pub fn write_audit_table<W: Write, T: Scalar>(
    writer: W,
    column_labels: (&str, &str),
    blocks: &[(String, CoefficientAudit<T>)],
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["series", "row", column_labels.0, column_labels.1])?;
    let num = |v: T| format!("{:.2}", v.as_f64());
    for (label, audit) in blocks {
        let c = &audit.comparison;
        let rows: [(&str, String, String); 6] = [
            (
                "Change in level",
                format_cell(&audit.level_change.0),
                format_cell(&audit.level_change.1),
            ),
            (
                "Change in slope",
                format_cell(&audit.slope_change.0),
                format_cell(&audit.slope_change.1),
            ),
            ("Average level", num(c.mean_overall.0), num(c.mean_overall.1)),
            ("Pre-sanctions", num(c.mean_pre.0), num(c.mean_pre.1)),
            ("Post-sanctions", num(c.mean_post.0), num(c.mean_post.1)),
            ("Correlation", format!("{:.4}", c.correlation.as_f64()), String::new()),
        ];
        for (row, x, y) in rows {
            wtr.write_record([label.as_str(), row, &x, &y])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<audit writer>", e))?;
    Ok(())
}

pub fn describe_search(result: &VintageSearchResult) -> String {
    let mut out = String::from("cutoff,distance\n");
    for (d, v) in &result.candidates {
        out.push_str(&format!("{},{v:.6}\n", format_timestamp(d)));
    }
    out.push_str(&format!("best,{}\n", format_timestamp(&result.best)));
    out
}
