//! Partner-reported trade records, data vintages and category aggregation.
//!
//! Imports are reconstructed from partners' reported exports ("mirror"
//! statistics). Each record carries the instant the partner first submitted
//! it and the instant of its latest revision; only the latest value is
//! observable, so a historical vintage keeps every record submitted by the
//! cutoff at its current value and drops the rest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::month::{Month, MonthRange};
use crate::series::{MonthlySeries, SeriesMeta, Transform};

/// Two-digit Harmonized System chapter, `01` through `99`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Hs2(u8);

impl Hs2 {
    pub fn new(code: u8) -> Result<Self> {
        if (1..=99).contains(&code) {
            Ok(Hs2(code))
        } else {
            Err(Error::invalid("hs2 code", format!("{code} not in 01..99")))
        }
    }

    pub fn code(self) -> u8 {
        self.0
    }
}

impl fmt::Display for Hs2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}", self.0)
    }
}

impl FromStr for Hs2 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() != 2 || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::invalid("hs2 code", format!("{s:?} is not two digits")));
        }
        Hs2::new(s.parse().expect("two ascii digits"))
    }
}

impl Serialize for Hs2 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Hs2 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Trade direction of a record. Only partner exports to the reporter, read
/// as the reporter's imports, are modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Flow {
    #[default]
    MirrorImport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTradeRecord {
    pub period: Month,
    pub reporter: String,
    pub partner: String,
    pub hs2: Hs2,
    pub flow: Flow,
    pub value_usd: f64,
    pub first_submitted_at: DateTime<Utc>,
    pub last_updated_at: DateTime<Utc>,
}

impl RawTradeRecord {
    fn key(&self) -> (Month, &str, &str, Hs2) {
        (self.period, &self.reporter, &self.partner, self.hs2)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordRow {
    period: String,
    reporter_code: String,
    partner_code: String,
    hs2_code: String,
    value_usd: String,
    first_submitted_at: String,
    last_updated_at: String,
}

/// Parses an ISO-8601 timestamp, normalized to UTC at second resolution.
///
/// Offsets are honoured; timestamps without an offset (and bare dates) are
/// read as UTC.
pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>> {
    let s = s.trim();
    let parsed = DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .or_else(|_| {
            NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f")
                .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f"))
                .map(|n| n.and_utc())
        })
        .or_else(|_| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d").map(|d| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc())
        })
        .map_err(|_| Error::invalid("timestamp", format!("{s:?} is not ISO-8601")))?;
    Ok(parsed.with_nanosecond(0).expect("zero nanoseconds"))
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn parse_row(row: RecordRow, row_no: usize) -> Result<RawTradeRecord> {
    let bad = |field: &'static str, message: String| Error::Parse {
        row: row_no,
        field,
        message,
    };
    let period_ok = row.period.len() == 6 && row.period.bytes().all(|b| b.is_ascii_digit());
    if !period_ok {
        return Err(bad("period", format!("{:?} is not YYYYMM", row.period)));
    }
    let period: Month = row.period.parse().map_err(|e: Error| bad("period", e.to_string()))?;
    if row.reporter_code.is_empty() {
        return Err(bad("reporter_code", "empty".into()));
    }
    if row.partner_code.is_empty() {
        return Err(bad("partner_code", "empty".into()));
    }
    let hs2: Hs2 = row
        .hs2_code
        .parse()
        .map_err(|e: Error| bad("hs2_code", e.to_string()))?;
    let value_usd: f64 = row
        .value_usd
        .parse()
        .map_err(|_| bad("value_usd", format!("{:?} is not a number", row.value_usd)))?;
    if !value_usd.is_finite() || value_usd < 0.0 {
        return Err(bad("value_usd", format!("{value_usd} is negative or not finite")));
    }
    let first = parse_timestamp(&row.first_submitted_at).map_err(|e| bad("first_submitted_at", e.to_string()))?;
    let last = parse_timestamp(&row.last_updated_at).map_err(|e| bad("last_updated_at", e.to_string()))?;
    if last < first {
        return Err(bad(
            "last_updated_at",
            format!(
                "{} precedes first submission {}",
                format_timestamp(&last),
                format_timestamp(&first)
            ),
        ));
    }
    Ok(RawTradeRecord {
        period,
        reporter: row.reporter_code,
        partner: row.partner_code,
        hs2,
        flow: Flow::MirrorImport,
        value_usd,
        first_submitted_at: first,
        last_updated_at: last,
    })
}

/// Parses the comma-separated record file (header row required).
///
/// Errors name the 1-based data row (the header is not counted) and field.
pub fn parse_records<R: Read>(reader: R) -> Result<Vec<RawTradeRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize::<RecordRow>()
        .enumerate()
        .map(|(idx, row)| {
            let row = row.map_err(|e| Error::Parse {
                row: idx + 1,
                field: "record",
                message: e.to_string(),
            })?;
            parse_row(row, idx + 1)
        })
        .collect()
}

pub fn read_records_file(path: &Path) -> Result<Vec<RawTradeRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_records(std::io::BufReader::new(file))
}

pub fn write_records<W: Write>(writer: W, records: &[RawTradeRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "period",
        "reporter_code",
        "partner_code",
        "hs2_code",
        "value_usd",
        "first_submitted_at",
        "last_updated_at",
    ])?;
    for r in records {
        wtr.write_record([
            r.period.to_yyyymm(),
            r.reporter.clone(),
            r.partner.clone(),
            r.hs2.to_string(),
            r.value_usd.to_string(),
            format_timestamp(&r.first_submitted_at),
            format_timestamp(&r.last_updated_at),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<record writer>", e))?;
    Ok(())
}

/// As-of reconstruction rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VintagePolicy {
    pub cutoff_instant: DateTime<Utc>,
    /// Kept records carry their latest revision. Always true: earlier
    /// revisions are not observable.
    pub keep_updated_values: bool,
}

impl VintagePolicy {
    pub fn as_of(cutoff_instant: DateTime<Utc>) -> Self {
        VintagePolicy {
            cutoff_instant,
            keep_updated_values: true,
        }
    }
}

/// Keeps exactly the records first submitted at or before the cutoff.
pub fn apply_vintage(records: &[RawTradeRecord], policy: &VintagePolicy) -> Vec<RawTradeRecord> {
    records
        .iter()
        .filter(|r| r.first_submitted_at <= policy.cutoff_instant)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySet {
    pub name: String,
    pub codes: BTreeSet<Hs2>,
}

pub const ANOVA_FOOD: &str = "ANOVA_FOOD";
pub const FULL_FOOD: &str = "FULL_FOOD";
pub const MEDICINES: &str = "MEDICINES";

const ANOVA_FOOD_CODES: [u8; 10] = [2, 3, 4, 6, 7, 8, 20, 21, 22, 24];
const CEREALS_AND_OILS_CODES: [u8; 10] = [10, 11, 12, 13, 14, 15, 16, 17, 18, 19];

impl CategorySet {
    pub fn new(name: impl Into<String>, codes: impl IntoIterator<Item = Hs2>) -> Result<Self> {
        let name = name.into();
        let codes: BTreeSet<Hs2> = codes.into_iter().collect();
        if codes.is_empty() {
            return Err(Error::invalid("category set", format!("{name} has no codes")));
        }
        Ok(CategorySet { name, codes })
    }

    pub fn from_strs<S: AsRef<str>>(name: impl Into<String>, codes: &[S]) -> Result<Self> {
        let codes = codes.iter().map(|c| c.as_ref().parse()).collect::<Result<Vec<Hs2>>>()?;
        CategorySet::new(name, codes)
    }

    fn from_codes(name: &str, codes: impl IntoIterator<Item = u8>) -> Self {
        CategorySet::new(name, codes.into_iter().map(|c| Hs2::new(c).expect("built-in code")))
            .expect("built-in set is nonempty")
    }

    /// Food chapters kept by the original study: 02-08 (less 05) and 20-24
    /// (less 23).
    pub fn anova_food() -> Self {
        Self::from_codes(ANOVA_FOOD, ANOVA_FOOD_CODES)
    }

    /// All food chapters, adding cereals, milling, oils, sugar and their
    /// preparations (10-19).
    pub fn full_food() -> Self {
        Self::from_codes(FULL_FOOD, ANOVA_FOOD_CODES.into_iter().chain(CEREALS_AND_OILS_CODES))
    }

    /// Chapters 10-19 alone.
    pub fn cereals_and_oils() -> Self {
        Self::from_codes("CEREALS_AND_OILS", CEREALS_AND_OILS_CODES)
    }

    /// Pharmaceutical products, chapter 30.
    pub fn medicines() -> Self {
        Self::from_codes(MEDICINES, [30])
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            ANOVA_FOOD => Some(Self::anova_food()),
            FULL_FOOD => Some(Self::full_food()),
            MEDICINES => Some(Self::medicines()),
            "CEREALS_AND_OILS" => Some(Self::cereals_and_oils()),
            _ => None,
        }
    }

    pub fn contains(&self, code: Hs2) -> bool {
        self.codes.contains(&code)
    }

    pub fn is_subset(&self, other: &CategorySet) -> bool {
        self.codes.is_subset(&other.codes)
    }

    pub fn difference(&self, other: &CategorySet, name: impl Into<String>) -> Result<Self> {
        CategorySet::new(name, self.codes.difference(&other.codes).copied())
    }
}

/// Count of records sharing period, reporter, partner and chapter with an
/// earlier record.
pub fn count_duplicates(records: &[RawTradeRecord]) -> usize {
    let mut seen = BTreeSet::new();
    records.iter().filter(|r| !seen.insert(r.key())).count()
}

/// Sums record values (USD) into a monthly series in USD millions.
///
/// Months without a matching record are 0. Duplicate keys are summed.
pub fn aggregate_series(
    records: &[RawTradeRecord],
    category_set: &CategorySet,
    months: &MonthRange,
) -> MonthlySeries<f64> {
    let matching: Vec<&RawTradeRecord> = records
        .iter()
        .filter(|r| months.contains(r.period) && category_set.contains(r.hs2))
        .collect();

    let mut seen = BTreeSet::new();
    let dupes = matching.iter().filter(|r| !seen.insert(r.key())).count();
    if dupes > 0 {
        log::debug!(
            "{}: {dupes} duplicate record(s) (same period/reporter/partner/hs2) summed",
            category_set.name
        );
    }

    let mut totals = vec![0.0f64; months.len()];
    for r in matching {
        totals[r.period.since(months.start) as usize] += r.value_usd;
    }
    MonthlySeries::new(
        months.start,
        totals.into_iter().map(|usd| Some(usd / 1e6)).collect(),
        SeriesMeta {
            name: category_set.name.clone(),
            vintage: None,
            transform: Transform::Levels,
        },
    )
}

/// [`apply_vintage`] followed by [`aggregate_series`], tagging the vintage.
pub fn aggregate_as_of(
    records: &[RawTradeRecord],
    policy: Option<&VintagePolicy>,
    category_set: &CategorySet,
    months: &MonthRange,
) -> MonthlySeries<f64> {
    match policy {
        Some(p) => {
            let kept = apply_vintage(records, p);
            let mut s = aggregate_series(&kept, category_set, months);
            s.meta.vintage = Some(p.cutoff_instant);
            s
        }
        None => aggregate_series(records, category_set, months),
    }
}

/// Value share of `subset` within `total` over calendar `year`.
pub fn category_share(records: &[RawTradeRecord], subset: &CategorySet, total: &CategorySet, year: i32) -> Result<f64> {
    if !subset.is_subset(total) {
        return Err(Error::invalid(
            "category share",
            format!("{} is not a subset of {}", subset.name, total.name),
        ));
    }
    let mut sub = 0.0;
    let mut tot = 0.0;
    for r in records.iter().filter(|r| r.period.year() == year) {
        if total.contains(r.hs2) {
            tot += r.value_usd;
            if subset.contains(r.hs2) {
                sub += r.value_usd;
            }
        }
    }
    if tot <= 0.0 {
        return Err(Error::UndefinedShare { year });
    }
    Ok(sub / tot)
}

/// Yearly value per chapter of `set`, as fractions of the set total.
pub fn chapter_shares(records: &[RawTradeRecord], set: &CategorySet, year: i32) -> Result<BTreeMap<Hs2, f64>> {
    let mut by_code: BTreeMap<Hs2, f64> = set.codes.iter().map(|&c| (c, 0.0)).collect();
    for r in records.iter().filter(|r| r.period.year() == year) {
        if let Some(v) = by_code.get_mut(&r.hs2) {
            *v += r.value_usd;
        }
    }
    let total: f64 = by_code.values().sum();
    if total <= 0.0 {
        return Err(Error::UndefinedShare { year });
    }
    by_code.values_mut().for_each(|v| *v /= total);
    Ok(by_code)
}
