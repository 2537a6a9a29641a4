//! Gap-aware monthly series and the two-column series file.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::month::{Month, MonthRange};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    Levels,
    Log,
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transform::Levels => "levels",
            Transform::Log => "log",
        })
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "levels" | "level" => Ok(Transform::Levels),
            "log" | "logs" => Ok(Transform::Log),
            other => Err(Error::invalid("transform", format!("unknown transform {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SeriesMeta {
    /// Category set the series was aggregated from (or a free label).
    pub name: String,
    pub vintage: Option<DateTime<Utc>>,
    pub transform: Transform,
}

/// Consecutive monthly values in USD millions per month (or their logs).
///
/// Every month between `start` and `end()` has a slot; missing values are
/// `None`, never skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlySeries<T> {
    start: Month,
    values: Vec<Option<T>>,
    pub meta: SeriesMeta,
}

impl<T: Scalar> MonthlySeries<T> {
    /// Non-finite values are stored as missing.
    pub fn new(start: Month, values: Vec<Option<T>>, meta: SeriesMeta) -> Self {
        let values = values.into_iter().map(|v| v.filter(|x| x.is_finite())).collect();
        MonthlySeries { start, values, meta }
    }

    pub fn from_values(start: Month, values: &[T], name: &str) -> Self {
        Self::new(
            start,
            values.iter().copied().map(Some).collect(),
            SeriesMeta {
                name: name.to_string(),
                ..SeriesMeta::default()
            },
        )
    }

    pub fn start(&self) -> Month {
        self.start
    }

    /// Last month with a slot. Panics on an empty series.
    pub fn end(&self) -> Month {
        assert!(!self.values.is_empty(), "empty series has no end month");
        self.start.offset(self.values.len() as i32 - 1)
    }

    pub fn range(&self) -> Option<MonthRange> {
        (!self.values.is_empty()).then(|| MonthRange {
            start: self.start,
            end: self.end(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn transform(&self) -> Transform {
        self.meta.transform
    }

    pub fn values(&self) -> &[Option<T>] {
        &self.values
    }

    pub fn get(&self, month: Month) -> Option<T> {
        let k = month.since(self.start);
        if k < 0 {
            return None;
        }
        self.values.get(k as usize).copied().flatten()
    }

    pub fn covers(&self, range: &MonthRange) -> bool {
        self.range()
            .is_some_and(|r| r.start <= range.start && range.end <= r.end)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Month, Option<T>)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(k, v)| (self.start.offset(k as i32), *v))
    }

    /// Non-missing observations.
    pub fn observations(&self) -> impl Iterator<Item = (Month, T)> + '_ {
        self.iter().filter_map(|(m, v)| v.map(|v| (m, v)))
    }

    pub fn count_present(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Restricts to `range`; months outside the current span become missing.
    pub fn window(&self, range: &MonthRange) -> Self {
        MonthlySeries {
            start: range.start,
            values: range.iter().map(|m| self.get(m)).collect(),
            meta: self.meta.clone(),
        }
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        MonthlySeries::new(
            self.start,
            self.values.iter().map(|v| v.map(&mut f)).collect(),
            self.meta.clone(),
        )
    }

    pub fn cast<U: Scalar>(&self) -> MonthlySeries<U> {
        MonthlySeries::new(
            self.start,
            self.values
                .iter()
                .map(|v| v.and_then(|x| U::from_f64(x.as_f64())))
                .collect(),
            self.meta.clone(),
        )
    }

    /// Checks the levels invariant: every present value is nonnegative.
    pub fn validate_levels(&self) -> Result<()> {
        if self.meta.transform != Transform::Levels {
            return Ok(());
        }
        match self.observations().find(|(_, v)| *v < T::zero()) {
            Some((m, v)) => Err(Error::invalid(
                "series",
                format!("negative level {v} at {m} in {}", self.meta.name),
            )),
            None => Ok(()),
        }
    }
}

/// Outcome of [`log_transform`].
#[derive(Debug, Clone, PartialEq)]
pub struct LogTransformed<T> {
    pub series: MonthlySeries<T>,
    /// Present values that were zero or negative and became missing.
    pub dropped_nonpositive: usize,
}

/// Natural log of every positive value; zero or negative values become
/// missing and are counted.
pub fn log_transform<T: Scalar>(series: &MonthlySeries<T>) -> LogTransformed<T> {
    let mut dropped = 0;
    let values = series
        .values
        .iter()
        .map(|v| match v {
            Some(x) if *x > T::zero() => Some(x.ln()),
            Some(_) => {
                dropped += 1;
                None
            }
            None => None,
        })
        .collect();
    if dropped > 0 {
        log::debug!(
            "log transform of {}: {dropped} nonpositive value(s) treated as missing",
            series.meta.name
        );
    }
    let mut meta = series.meta.clone();
    meta.transform = Transform::Log;
    LogTransformed {
        series: MonthlySeries::new(series.start, values, meta),
        dropped_nonpositive: dropped,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SeriesRow {
    month: String,
    value_usd_millions: Option<f64>,
}

/// Reads a `month,value_usd_millions` file. Months may be `YYYY-MM` or
/// `YYYYMM`, must be strictly increasing, and gaps become missing values.
pub fn read_series<R: Read>(reader: R, name: &str) -> Result<MonthlySeries<f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut points: Vec<(Month, Option<f64>)> = Vec::new();
    for (idx, row) in rdr.deserialize::<SeriesRow>().enumerate() {
        let row_no = idx + 1;
        let row = row.map_err(|e| Error::Parse {
            row: row_no,
            field: "record",
            message: e.to_string(),
        })?;
        let month: Month = row.month.parse().map_err(|e: Error| Error::Parse {
            row: row_no,
            field: "month",
            message: e.to_string(),
        })?;
        if let Some(&(prev, _)) = points.last() {
            if month <= prev {
                return Err(Error::Parse {
                    row: row_no,
                    field: "month",
                    message: format!("{month} does not follow {prev}"),
                });
            }
        }
        if let Some(v) = row.value_usd_millions {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Parse {
                    row: row_no,
                    field: "value_usd_millions",
                    message: format!("{v} is not a nonnegative amount"),
                });
            }
        }
        points.push((month, row.value_usd_millions));
    }
    let Some(&(start, _)) = points.first() else {
        return Ok(MonthlySeries::new(
            Month::new(1970, 1)?,
            Vec::new(),
            SeriesMeta {
                name: name.to_string(),
                ..SeriesMeta::default()
            },
        ));
    };
    let end = points.last().map(|p| p.0).unwrap_or(start);
    let mut values = vec![None; (end.since(start) + 1) as usize];
    for (m, v) in points {
        values[m.since(start) as usize] = v;
    }
    Ok(MonthlySeries::new(
        start,
        values,
        SeriesMeta {
            name: name.to_string(),
            ..SeriesMeta::default()
        },
    ))
}

pub fn read_series_file(path: &Path) -> Result<MonthlySeries<f64>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_series(file, &name)
}

/// Writes the two-column series file; missing values are empty cells.
pub fn write_series<W: Write, T: Scalar>(writer: W, series: &MonthlySeries<T>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for (m, v) in series.iter() {
        wtr.serialize(SeriesRow {
            month: m.to_string(),
            value_usd_millions: v.map(Scalar::as_f64),
        })?;
    }
    if series.is_empty() {
        wtr.write_record(["month", "value_usd_millions"])?;
    }
    wtr.flush().map_err(|e| Error::io("<series writer>", e))?;
    Ok(())
}

pub fn write_series_file<T: Scalar>(path: &Path, series: &MonthlySeries<T>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_series(file, series)
}
