//! Run configuration, read from a TOML file.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::audit::DistanceMetric;
use crate::error::{Error, Result};
use crate::ingest::{parse_timestamp, CategorySet};
use crate::month::{Month, MonthRange};
use crate::ols::CovarianceKind;
use crate::rdd::{BandwidthRule, Estimand, Kernel, RddSpec, VarianceEstimator};
use crate::series::Transform;
use crate::trend_break::TrendBreakSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Raw trade record file.
    pub data: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// User-defined category sets, name to two-digit chapter codes.
    #[serde(default)]
    pub category_sets: BTreeMap<String, Vec<String>>,
    pub vintages: Vec<VintageConfig>,
    pub series: Vec<SeriesConfig>,
    pub transforms: Vec<Transform>,
    pub trend_break: TrendBreakConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rdd: Option<RddConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shares: Option<ShareConfig>,
    /// Table panels; empty means one panel per vintage and transform.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub panels: Vec<PanelConfig>,
    /// Directory relative paths are resolved against. Set by
    /// [`RunConfig::from_file`], never serialized.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn missing_file(path: PathBuf) -> Error {
    Error::Io {
        path,
        source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VintageConfig {
    pub label: String,
    /// Submission cutoff; absent means every record is kept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesConfig {
    pub label: String,
    pub category_set: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrendBreakConfig {
    pub cutoff: Month,
    #[serde(default = "default_pre")]
    pub pre_window: u32,
    #[serde(default = "default_post")]
    pub post_window: u32,
    #[serde(default)]
    pub covariance: CovarianceKind,
    /// Months of counterfactual projection after the cutoff; 0 disables it.
    #[serde(default = "default_horizon")]
    pub horizon: u32,
}

fn default_pre() -> u32 {
    28
}

fn default_post() -> u32 {
    29
}

fn default_horizon() -> u32 {
    28
}

impl TrendBreakConfig {
    pub fn spec(&self, transform: Transform) -> TrendBreakSpec {
        let mut spec = TrendBreakSpec::new(self.cutoff, transform).with_windows(self.pre_window, self.post_window);
        spec.covariance = self.covariance;
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RddConfig {
    pub vintage: String,
    #[serde(default = "default_rdd_transform")]
    pub transform: Transform,
    pub sample_start: Month,
    pub sample_end: Month,
    #[serde(default = "default_estimands")]
    pub estimands: Vec<Estimand>,
    #[serde(default = "default_level_order")]
    pub level_order: usize,
    #[serde(default = "default_slope_order")]
    pub slope_order: usize,
    #[serde(default)]
    pub kernel: Kernel,
    #[serde(default = "default_pilot_ratio")]
    pub pilot_ratio: f64,
    /// Fixed bandwidth in months; absent selects it from the data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(default)]
    pub variance: VarianceEstimator,
}

fn default_rdd_transform() -> Transform {
    Transform::Log
}

fn default_estimands() -> Vec<Estimand> {
    vec![Estimand::Level, Estimand::Slope]
}

fn default_level_order() -> usize {
    Estimand::Level.default_order()
}

fn default_slope_order() -> usize {
    Estimand::Slope.default_order()
}

fn default_pilot_ratio() -> f64 {
    1.5
}

impl RddConfig {
    pub fn sample(&self) -> Result<MonthRange> {
        MonthRange::new(self.sample_start, self.sample_end).map_err(|e| Error::Config(format!("rdd sample: {e}")))
    }

    pub fn spec(&self, cutoff: Month, estimand: Estimand) -> Result<RddSpec<f64>> {
        let mut spec = RddSpec::new(cutoff, estimand, self.sample()?);
        spec.poly_order = match estimand {
            Estimand::Level => self.level_order,
            Estimand::Slope => self.slope_order,
        };
        spec.kernel = self.kernel;
        spec.pilot_ratio = self.pilot_ratio;
        spec.variance = self.variance;
        if let Some(h) = self.bandwidth {
            spec.bandwidth = BandwidthRule::Manual(h);
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    /// Vintage the reconstructed series are built under.
    pub vintage: String,
    #[serde(default = "default_audit_labels")]
    pub column_labels: (String, String),
    #[serde(default)]
    pub targets: Vec<AuditTarget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchConfig>,
}

fn default_audit_labels() -> (String, String) {
    ("extracted".to_string(), "reconstructed".to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditTarget {
    /// Label of a configured series.
    pub series: String,
    /// Two-column `month,value_usd_millions` file.
    pub file: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    /// Label of an audit target whose file is the search target.
    pub series: String,
    pub first: String,
    pub last: String,
    #[serde(default)]
    pub metric: DistanceMetric,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShareConfig {
    pub year: i32,
    pub subset: String,
    pub total: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vintage: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelConfig {
    pub label: String,
    pub transform: Transform,
    pub vintage: String,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses a config file; relative paths resolve against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = Some(path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf));
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn data_path(&self) -> PathBuf {
        self.resolve(&self.data)
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// Looks up a user-defined set first, then the built-ins.
    pub fn category_set(&self, name: &str) -> Result<CategorySet> {
        if let Some(codes) = self.category_sets.get(name) {
            return CategorySet::from_strs(name, codes).map_err(|e| Error::Config(format!("category set {name}: {e}")));
        }
        CategorySet::builtin(name).ok_or_else(|| Error::Config(format!("unknown category set {name}")))
    }

    pub fn vintage(&self, label: &str) -> Result<&VintageConfig> {
        self.vintages
            .iter()
            .find(|v| v.label == label)
            .ok_or_else(|| Error::Config(format!("unknown vintage {label}")))
    }

    pub fn vintage_cutoff(&self, label: &str) -> Result<Option<DateTime<Utc>>> {
        self.vintage(label)?
            .cutoff
            .as_deref()
            .map(|s| parse_timestamp(s).map_err(|e| Error::Config(format!("vintage {label}: {e}"))))
            .transpose()
    }

    pub fn series_config(&self, label: &str) -> Result<&SeriesConfig> {
        self.series
            .iter()
            .find(|s| s.label == label)
            .ok_or_else(|| Error::Config(format!("unknown series {label}")))
    }

    /// Configured panels, or one per vintage and transform.
    pub fn effective_panels(&self) -> Vec<PanelConfig> {
        if !self.panels.is_empty() {
            return self.panels.clone();
        }
        self.vintages
            .iter()
            .flat_map(|v| {
                self.transforms.iter().map(move |&t| PanelConfig {
                    label: format!("{t}, {}", v.label),
                    transform: t,
                    vintage: v.label.clone(),
                })
            })
            .collect()
    }

    /// Months every series is aggregated over: the trend window, the
    /// projection horizon and the RD sample.
    pub fn aggregation_range(&self) -> Result<MonthRange> {
        let spec = self.trend_break.spec(Transform::Levels);
        let mut range = spec.window();
        let horizon_end = self.trend_break.cutoff.offset(self.trend_break.horizon as i32);
        if horizon_end > range.end {
            range.end = horizon_end;
        }
        if let Some(rdd) = &self.rdd {
            range = range.union(&rdd.sample()?);
        }
        Ok(range)
    }

    /// Checks references, files and estimator settings. Missing input files
    /// are data errors; everything else is a configuration error.
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.series.is_empty() {
            return err("no series defined".into());
        }
        if self.vintages.is_empty() {
            return err("no vintages defined".into());
        }
        if self.transforms.is_empty() {
            return err("no transforms requested".into());
        }
        unique("series", self.series.iter().map(|s| s.label.as_str()))?;
        unique("vintage", self.vintages.iter().map(|v| v.label.as_str()))?;
        unique(
            "transform",
            self.transforms
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .iter()
                .map(String::as_str),
        )?;
        for s in &self.series {
            if s.label.is_empty() || s.label.contains(['/', '\\']) {
                return err(format!(
                    "series label {:?} must be nonempty without path separators",
                    s.label
                ));
            }
            self.category_set(&s.category_set)?;
        }
        for v in &self.vintages {
            if v.label.is_empty() || v.label.contains(['/', '\\']) {
                return err(format!(
                    "vintage label {:?} must be nonempty without path separators",
                    v.label
                ));
            }
            self.vintage_cutoff(&v.label)?;
        }
        for name in self.category_sets.keys() {
            self.category_set(name)?;
        }
        let data = self.data_path();
        if !data.is_file() {
            return Err(missing_file(data));
        }
        self.trend_break
            .spec(Transform::Levels)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;

        if let Some(rdd) = &self.rdd {
            self.vintage(&rdd.vintage)?;
            if rdd.estimands.is_empty() {
                return err("rdd: no estimands requested".into());
            }
            for &e in &rdd.estimands {
                rdd.spec(self.trend_break.cutoff, e)?
                    .validate()
                    .map_err(|e| Error::Config(format!("rdd: {e}")))?;
            }
        }
        if let Some(audit) = &self.audit {
            self.vintage(&audit.vintage)?;
            for t in &audit.targets {
                self.series_config(&t.series)?;
                let path = self.resolve(&t.file);
                if !path.is_file() {
                    return Err(missing_file(path));
                }
            }
            if let Some(search) = &audit.search {
                if !audit.targets.iter().any(|t| t.series == search.series) {
                    return err(format!("vintage search series {} has no audit target", search.series));
                }
                let first = parse_timestamp(&search.first).map_err(|e| Error::Config(format!("search first: {e}")))?;
                let last = parse_timestamp(&search.last).map_err(|e| Error::Config(format!("search last: {e}")))?;
                if last < first {
                    return err("vintage search: last date precedes first".into());
                }
            }
        }
        if let Some(shares) = &self.shares {
            let sub = self.category_set(&shares.subset)?;
            let tot = self.category_set(&shares.total)?;
            if !sub.is_subset(&tot) {
                return err(format!("shares: {} is not a subset of {}", sub.name, tot.name));
            }
            if let Some(v) = &shares.vintage {
                self.vintage(v)?;
            }
        }
        for p in &self.panels {
            self.vintage(&p.vintage)?;
            if !self.transforms.contains(&p.transform) {
                return err(format!("panel {}: transform {} not requested", p.label, p.transform));
            }
        }
        Ok(())
    }
}

fn unique<'a>(what: &str, labels: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for l in labels {
        if !seen.insert(l) {
            return Err(Error::Config(format!("duplicate {what} {l}")));
        }
    }
    Ok(())
}
