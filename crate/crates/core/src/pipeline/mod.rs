//! Config-driven orchestration: ingest, vintage, aggregate, fit, audit,
//! render.
//!
//! Every result cell is produced by a direct call into the estimation
//! modules; nothing is cached between runs.

mod config;
mod figure;
mod render;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    AuditConfig, AuditTarget, PanelConfig, RddConfig, RunConfig, SearchConfig, SeriesConfig, ShareConfig,
    TrendBreakConfig, VintageConfig,
};
pub use figure::{export_figure_data, figure_csv};
pub use render::{render_tables, RenderedTables, MISSING_CELL};

use crate::audit::{coefficient_audit, search_vintage_date, weekly_candidates, CoefficientAudit, VintageSearchResult};
use crate::error::{Error, Result};
use crate::ingest::{
    aggregate_as_of, category_share, chapter_shares, count_duplicates, parse_timestamp, read_records_file,
    RawTradeRecord, VintagePolicy,
};
use crate::month::Month;
use crate::ols::Coefficient;
use crate::rdd::{rd_estimate, Estimand, RddFit};
use crate::series::{log_transform, read_series_file, MonthlySeries, Transform};
use crate::trend_break::{
    annualize_log_slope, counterfactual_projection, feasibility_check, fit_trend_break, segment_trend,
    CounterfactualPath, Feasibility, SegmentTrend, Side, TrendBreakFit,
};

/// Everything written to `results.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub layout: TableLayout,
    pub trend_breaks: Vec<TrendRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rdd: Vec<RdRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditResults>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shares: Option<ShareRecord>,
}

/// Row and column order for the rendered tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableLayout {
    pub cutoff: Month,
    pub series: Vec<String>,
    pub panels: Vec<PanelConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub estimands: Vec<Estimand>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRecord {
    pub series: String,
    pub category_set: String,
    pub vintage: String,
    pub transform: Transform,
    pub n: usize,
    pub n_pre: usize,
    pub n_post: usize,
    pub df_resid: usize,
    pub r_squared: f64,
    /// Window months dropped by the log transform (zero or negative).
    pub log_dropped_nonpositive: usize,
    pub alpha0: Coefficient<f64>,
    pub alpha1: Coefficient<f64>,
    pub alpha2: Coefficient<f64>,
    pub alpha3: Coefficient<f64>,
    pub pre_segment: SegmentTrend<f64>,
    pub post_segment: SegmentTrend<f64>,
    /// Segment slopes as percent per year (log fits only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annualized_pct: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterfactual: Option<CounterfactualRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualRecord {
    pub horizon: u32,
    pub end_month: Month,
    /// Projection at the horizon, in the fit's units.
    pub end_value: f64,
    /// The same in USD millions (exponentiated for log fits).
    pub end_value_levels: f64,
    /// Fitted post line minus projection at the horizon.
    pub end_gap: f64,
    /// Levels only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility: Option<Feasibility>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdRecord {
    pub series: String,
    pub vintage: String,
    pub transform: Transform,
    pub log_dropped_nonpositive: usize,
    #[serde(flatten)]
    pub fit: RddFit<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditResults {
    pub vintage: String,
    pub column_labels: (String, String),
    pub rows: Vec<AuditRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vintage_search: Option<SearchRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub series: String,
    #[serde(flatten)]
    pub audit: CoefficientAudit<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub series: String,
    #[serde(flatten)]
    pub result: VintageSearchResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareRecord {
    pub year: i32,
    pub vintage: Option<String>,
    pub subset: String,
    pub total: String,
    pub share_pct: f64,
    pub chapter_shares_pct: BTreeMap<String, f64>,
}

/// Trend fit with the data behind its figure.
#[derive(Debug, Clone)]
pub struct TrendArtifact {
    pub series: String,
    pub vintage: String,
    pub transform: Transform,
    pub fit: TrendBreakFit<f64>,
    pub counterfactual: Option<CounterfactualPath<f64>>,
    /// Aggregated series in levels.
    pub data: MonthlySeries<f64>,
}

impl TrendArtifact {
    pub fn figure_name(&self) -> String {
        format!("{}_{}_{}.csv", self.series, self.vintage, self.transform)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub results: Results,
    pub artifacts: Vec<TrendArtifact>,
    pub tables: RenderedTables,
}

/// Aggregated levels series keyed by (vintage, series) label.
pub type SeriesStore = BTreeMap<(String, String), MonthlySeries<f64>>;

pub fn load_records(config: &RunConfig) -> Result<Vec<RawTradeRecord>> {
    let path = config.data_path();
    let records = read_records_file(&path).map_err(|e| e.at_stage("ingest", path.display().to_string()))?;
    let dupes = count_duplicates(&records);
    if dupes > 0 {
        log::warn!(
            "{}: {dupes} record(s) repeat an earlier period/reporter/partner/hs2 key; values are summed",
            path.display()
        );
    }
    Ok(records)
}

fn warn_dropped(label: &str, dropped: usize) {
    if dropped > 0 {
        log::warn!("{label}: {dropped} nonpositive month(s) left out of the log fit");
    }
}

fn vintage_policy(config: &RunConfig, label: &str) -> Result<Option<VintagePolicy>> {
    Ok(config.vintage_cutoff(label)?.map(VintagePolicy::as_of))
}

/// Series for every configured vintage and series label.
pub fn aggregate_all(config: &RunConfig, records: &[RawTradeRecord]) -> Result<SeriesStore> {
    let months = config.aggregation_range()?;
    let mut store = SeriesStore::new();
    for v in &config.vintages {
        let policy = vintage_policy(config, &v.label)?;
        for s in &config.series {
            let set = config.category_set(&s.category_set)?;
            let mut series = aggregate_as_of(records, policy.as_ref(), &set, &months);
            series.meta.name = s.label.clone();
            store.insert((v.label.clone(), s.label.clone()), series);
        }
    }
    Ok(store)
}

fn stored<'a>(store: &'a SeriesStore, vintage: &str, series: &str) -> &'a MonthlySeries<f64> {
    &store[&(vintage.to_string(), series.to_string())]
}

/// One trend-break fit with its diagnostics.
pub fn trend_cell(
    config: &RunConfig,
    series_label: &str,
    vintage: &str,
    transform: Transform,
    levels: &MonthlySeries<f64>,
) -> Result<(TrendRecord, TrendArtifact)> {
    let label = format!("{series_label}/{vintage}/{transform}");
    let spec = config.trend_break.spec(transform);
    let window = levels.window(&spec.window());
    let (data, dropped) = match transform {
        Transform::Levels => (window, 0),
        Transform::Log => {
            let lt = log_transform(&window);
            (lt.series, lt.dropped_nonpositive)
        }
    };
    warn_dropped(&label, dropped);
    let fit = fit_trend_break(&data, &spec).map_err(|e| e.at_stage("trend_break", &label))?;
    let pre = segment_trend(&data, &spec, Side::Pre).map_err(|e| e.at_stage("segment_trend", &label))?;
    let post = segment_trend(&data, &spec, Side::Post).map_err(|e| e.at_stage("segment_trend", &label))?;

    let horizon = config.trend_break.horizon;
    let path = (horizon > 0).then(|| counterfactual_projection(&fit, horizon));
    let counterfactual = match &path {
        None => None,
        Some(p) => {
            let (end_month, end_value) = p.last().expect("nonempty projection");
            let feasibility = match transform {
                Transform::Levels => Some(feasibility_check(p).map_err(|e| e.at_stage("counterfactual", &label))?),
                Transform::Log => None,
            };
            Some(CounterfactualRecord {
                horizon,
                end_month,
                end_value,
                end_value_levels: match transform {
                    Transform::Levels => end_value,
                    Transform::Log => end_value.exp(),
                },
                end_gap: p.gap(horizon as i32),
                feasibility,
            })
        }
    };
    let series_cfg = config.series_config(series_label)?;
    let record = TrendRecord {
        series: series_label.to_string(),
        category_set: series_cfg.category_set.clone(),
        vintage: vintage.to_string(),
        transform,
        n: fit.n_used(),
        n_pre: fit.n_pre,
        n_post: fit.n_post,
        df_resid: fit.df_resid,
        r_squared: fit.r_squared,
        log_dropped_nonpositive: dropped,
        alpha0: fit.alpha0,
        alpha1: fit.alpha1,
        alpha2: fit.alpha2,
        alpha3: fit.alpha3,
        pre_segment: pre,
        post_segment: post,
        annualized_pct: (transform == Transform::Log).then(|| {
            (
                annualize_log_slope(pre.slope.estimate),
                annualize_log_slope(post.slope.estimate),
            )
        }),
        counterfactual,
    };
    let artifact = TrendArtifact {
        series: series_label.to_string(),
        vintage: vintage.to_string(),
        transform,
        fit,
        counterfactual: path,
        data: levels.clone(),
    };
    Ok((record, artifact))
}

/// One discontinuity estimate on a levels series.
pub fn rdd_cell(
    rdd: &RddConfig,
    cutoff: Month,
    series_label: &str,
    estimand: Estimand,
    levels: &MonthlySeries<f64>,
) -> Result<RdRecord> {
    let label = format!("{series_label}/{}/{}/{estimand:?}", rdd.vintage, rdd.transform).to_lowercase();
    let spec = rdd.spec(cutoff, estimand)?;
    let sample = levels.window(&spec.bandwidth_sample);
    let (data, dropped) = match rdd.transform {
        Transform::Levels => (sample, 0),
        Transform::Log => {
            let lt = log_transform(&sample);
            (lt.series, lt.dropped_nonpositive)
        }
    };
    warn_dropped(&label, dropped);
    let fit = rd_estimate(&data, &spec).map_err(|e| e.at_stage("rdd", label))?;
    Ok(RdRecord {
        series: series_label.to_string(),
        vintage: rdd.vintage.clone(),
        transform: rdd.transform,
        log_dropped_nonpositive: dropped,
        fit,
    })
}

/// Audit comparisons and the optional vintage search.
pub fn run_audit(config: &RunConfig, records: &[RawTradeRecord], store: &SeriesStore) -> Result<Option<AuditResults>> {
    let Some(audit) = &config.audit else {
        return Ok(None);
    };
    let spec = config.trend_break.spec(Transform::Levels);
    let mut targets = BTreeMap::new();
    let mut rows = Vec::new();
    for t in &audit.targets {
        let path = config.resolve(&t.file);
        let mut extracted = read_series_file(&path).map_err(|e| e.at_stage("audit", &t.series))?;
        extracted.meta.name = format!("{} ({})", t.series, audit.column_labels.0);
        let rebuilt = stored(store, &audit.vintage, &t.series);
        let result = coefficient_audit(&extracted, rebuilt, &spec).map_err(|e| e.at_stage("audit", &t.series))?;
        rows.push(AuditRecord {
            series: t.series.clone(),
            audit: result,
        });
        targets.insert(t.series.clone(), extracted);
    }
    let vintage_search = match &audit.search {
        None => None,
        Some(s) => {
            let first = parse_timestamp(&s.first)?;
            let last = parse_timestamp(&s.last)?;
            let set = config.category_set(&config.series_config(&s.series)?.category_set)?;
            let result = search_vintage_date(
                records,
                &targets[&s.series],
                &weekly_candidates(first, last),
                &set,
                s.metric,
            )
            .map_err(|e| e.at_stage("vintage_search", &s.series))?;
            Some(SearchRecord {
                series: s.series.clone(),
                result,
            })
        }
    };
    Ok(Some(AuditResults {
        vintage: audit.vintage.clone(),
        column_labels: audit.column_labels.clone(),
        rows,
        vintage_search,
    }))
}

fn run_shares(config: &RunConfig, records: &[RawTradeRecord]) -> Result<Option<ShareRecord>> {
    let Some(cfg) = &config.shares else {
        return Ok(None);
    };
    let label = format!("{} in {}", cfg.subset, cfg.total);
    let kept;
    let records = match &cfg.vintage {
        Some(v) => match vintage_policy(config, v)? {
            Some(policy) => {
                kept = crate::ingest::apply_vintage(records, &policy);
                &kept[..]
            }
            None => records,
        },
        None => records,
    };
    let subset = config.category_set(&cfg.subset)?;
    let total = config.category_set(&cfg.total)?;
    let share = category_share(records, &subset, &total, cfg.year).map_err(|e| e.at_stage("shares", &label))?;
    let chapters = chapter_shares(records, &total, cfg.year).map_err(|e| e.at_stage("shares", &label))?;
    Ok(Some(ShareRecord {
        year: cfg.year,
        vintage: cfg.vintage.clone(),
        subset: subset.name,
        total: total.name,
        share_pct: 100.0 * share,
        chapter_shares_pct: chapters.into_iter().map(|(k, v)| (k.to_string(), 100.0 * v)).collect(),
    }))
}

/// Runs every configured estimate without touching the file system beyond
/// reading inputs.
pub fn execute(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let records = load_records(config)?;
    let store = aggregate_all(config, &records)?;

    let jobs: Vec<(&str, &str, Transform)> = config
        .vintages
        .iter()
        .flat_map(|v| {
            config.transforms.iter().flat_map(move |&t| {
                config
                    .series
                    .iter()
                    .map(move |s| (v.label.as_str(), s.label.as_str(), t))
            })
        })
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(v, s, t)| trend_cell(config, s, v, t, stored(&store, v, s)))
        .collect::<Result<Vec<_>>>()?;
    let (trend_breaks, artifacts): (Vec<_>, Vec<_>) = cells.into_iter().unzip();

    let mut estimands = Vec::new();
    let rdd = match &config.rdd {
        None => Vec::new(),
        Some(r) => {
            estimands = r.estimands.clone();
            let jobs: Vec<(&str, Estimand)> = config
                .series
                .iter()
                .flat_map(|s| r.estimands.iter().map(move |&e| (s.label.as_str(), e)))
                .collect();
            jobs.par_iter()
                .map(|&(s, e)| rdd_cell(r, config.trend_break.cutoff, s, e, stored(&store, &r.vintage, s)))
                .collect::<Result<Vec<_>>>()?
        }
    };

    let audit = run_audit(config, &records, &store)?;
    let shares = run_shares(config, &records)?;

    let results = Results {
        layout: TableLayout {
            cutoff: config.trend_break.cutoff,
            series: config.series.iter().map(|s| s.label.clone()).collect(),
            panels: config.effective_panels(),
            estimands,
        },
        trend_breaks,
        rdd,
        audit,
        shares,
    };
    let tables = render_tables(&results)?;
    Ok(RunOutput {
        results,
        artifacts,
        tables,
    })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e).at_stage("write", path.display().to_string()))
}

/// Writes results, tables and figure data under `dir`; returns the files
/// written in order.
pub fn write_outputs(output: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let figures = dir.join("figures");
    std::fs::create_dir_all(&figures).map_err(|e| Error::io(&figures, e))?;
    let mut written = Vec::new();
    let mut put = |name: PathBuf, bytes: Vec<u8>| -> Result<()> {
        write_file(&name, &bytes)?;
        written.push(name);
        Ok(())
    };

    let mut json = serde_json::to_string_pretty(&output.results)
        .map_err(|e| Error::Degenerate(format!("results serialization: {e}")))?;
    json.push('\n');
    put(dir.join("results.json"), json.into_bytes())?;
    put(dir.join("table3.txt"), output.tables.table3.clone().into_bytes())?;
    if let Some(t) = &output.tables.table4 {
        put(dir.join("table4.txt"), t.clone().into_bytes())?;
    }
    if let Some(t) = &output.tables.table5 {
        put(dir.join("table5.csv"), t.clone().into_bytes())?;
    }
    if let Some(t) = &output.tables.vintage_search {
        put(dir.join("vintage_search.csv"), t.clone().into_bytes())?;
    }
    for a in &output.artifacts {
        let csv = figure_csv(&a.fit, a.counterfactual.as_ref(), &a.data)?;
        put(figures.join(a.figure_name()), csv.into_bytes())?;
    }
    Ok(written)
}

/// Full run: estimates, then outputs under `out_dir` (or the configured
/// output directory).
pub fn run_pipeline(config: &RunConfig, out_dir: Option<&Path>) -> Result<(RunOutput, Vec<PathBuf>)> {
    let output = execute(config)?;
    let dir = out_dir.map_or_else(|| config.output_path(), Path::to_path_buf);
    let written = write_outputs(&output, &dir)?;
    Ok((output, written))
}
