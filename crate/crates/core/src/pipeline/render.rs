//! Plain-text coefficient tables.

use crate::audit::{describe_search, write_audit_table};
use crate::error::{Error, Result};
use crate::rdd::Estimand;
use crate::stars::{fixed2, format_cell, format_estimate};

use super::{Results, TrendRecord};

/// Placeholder for a requested cell with no estimate.
pub const MISSING_CELL: &str = "—";

const NOTE: &str =
    "Cells: estimate with significance stars, standard error in parentheses. *** p<0.01, ** p<0.05, * p<0.10.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedTables {
    pub table3: String,
    pub table4: Option<String>,
    pub table5: Option<String>,
    pub vintage_search: Option<String>,
}

/// Left-aligned columns separated by two spaces.
fn grid(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s:<w$}", w = widths[c]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn missing(what: &str) -> String {
    log::warn!("no estimate for {what}; rendered as {MISSING_CELL}");
    MISSING_CELL.to_string()
}

fn render_table3(results: &Results) -> String {
    let layout = &results.layout;
    let mut out = format!("Trend interruption at {}\n{NOTE}\n", layout.cutoff);
    let find = |series: &str, vintage: &str, transform| -> Option<&TrendRecord> {
        results
            .trend_breaks
            .iter()
            .find(|r| r.series == series && r.vintage == vintage && r.transform == transform)
    };
    for panel in &layout.panels {
        let mut rows = vec![std::iter::once(String::new())
            .chain(layout.series.iter().cloned())
            .collect::<Vec<_>>()];
        let mut push_row = |name: &str, cell: &dyn Fn(&TrendRecord) -> String| {
            let mut row = vec![name.to_string()];
            for s in &layout.series {
                row.push(match find(s, &panel.vintage, panel.transform) {
                    Some(r) => cell(r),
                    None => missing(&format!("{name}, {s}, {}", panel.label)),
                });
            }
            rows.push(row);
        };
        push_row("Change in level", &|r| format_cell(&r.alpha1));
        push_row("Change in slope", &|r| format_cell(&r.alpha3));
        push_row("Observations", &|r| r.n.to_string());
        out.push('\n');
        out.push_str(&panel.label);
        out.push('\n');
        out.push_str(&grid(&rows));
    }
    out
}

fn render_table4(results: &Results) -> Option<String> {
    let layout = &results.layout;
    if layout.estimands.is_empty() {
        return None;
    }
    let first = results.rdd.first();
    let mut out = format!("Regression discontinuity at {}\n", layout.cutoff);
    if let Some(f) = first {
        out.push_str(&format!(
            "Vintage {}, {}; robust bias-corrected standard errors and p-values.\n",
            f.vintage, f.transform
        ));
    }
    out.push_str(NOTE);
    out.push('\n');
    let mut rows = vec![std::iter::once(String::new())
        .chain(layout.series.iter().cloned())
        .collect::<Vec<_>>()];
    for &e in &layout.estimands {
        let name = match e {
            Estimand::Level => "Change in level",
            Estimand::Slope => "Change in slope",
        };
        let find = |s: &str| results.rdd.iter().find(|r| r.series == s && r.fit.estimand == e);
        let mut est = vec![name.to_string()];
        let mut bw = vec!["  Bandwidth h (b)".to_string()];
        let mut n = vec!["  Effective n (left, right)".to_string()];
        for s in &layout.series {
            match find(s) {
                Some(r) => {
                    let f = &r.fit;
                    est.push(format_estimate(f.tau, f.se_robust, f.p_robust));
                    bw.push(format!("{} ({})", fixed2(f.h_used), fixed2(f.b_used)));
                    n.push(format!("{}, {}", f.n_left, f.n_right));
                }
                None => {
                    est.push(missing(&format!("{name}, {s}")));
                    bw.push(MISSING_CELL.to_string());
                    n.push(MISSING_CELL.to_string());
                }
            }
        }
        rows.extend([est, bw, n]);
    }
    out.push('\n');
    out.push_str(&grid(&rows));
    Some(out)
}

/// Renders the trend-break, discontinuity and audit tables.
pub fn render_tables(results: &Results) -> Result<RenderedTables> {
    let (table5, vintage_search) = match &results.audit {
        None => (None, None),
        Some(a) => {
            let blocks: Vec<_> = a.rows.iter().map(|r| (r.series.clone(), r.audit.clone())).collect();
            let mut buf = Vec::new();
            write_audit_table(&mut buf, (&a.column_labels.0, &a.column_labels.1), &blocks)?;
            let text = String::from_utf8(buf).map_err(|e| Error::Degenerate(e.to_string()))?;
            (
                Some(text),
                a.vintage_search.as_ref().map(|s| describe_search(&s.result)),
            )
        }
    };
    Ok(RenderedTables {
        table3: render_table3(results),
        table4: render_table4(results),
        table5,
        vintage_search,
    })
}
