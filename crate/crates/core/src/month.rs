//! Calendar months and inclusive month ranges.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A calendar month, stored as a count of months since January of year 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month(i32);

impl Month {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::invalid("month", format!("{month} not in 1..=12")));
        }
        Ok(Month(year * 12 + month as i32 - 1))
    }

    pub fn year(self) -> i32 {
        self.0.div_euclid(12)
    }

    /// 1-based month of the year.
    pub fn month(self) -> u32 {
        self.0.rem_euclid(12) as u32 + 1
    }

    pub fn offset(self, months: i32) -> Month {
        Month(self.0 + months)
    }

    /// Signed number of months from `origin` to `self`.
    pub fn since(self, origin: Month) -> i32 {
        self.0 - origin.0
    }

    pub fn next(self) -> Month {
        self.offset(1)
    }

    /// Compact `YYYYMM` form used by the trade record files.
    pub fn to_yyyymm(self) -> String {
        format!("{:04}{:02}", self.year(), self.month())
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year(), self.month())
    }
}

impl FromStr for Month {
    type Err = Error;

    /// Accepts `YYYYMM` and `YYYY-MM`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (y, m) = match s.len() {
            6 if s.bytes().all(|b| b.is_ascii_digit()) => (&s[..4], &s[4..]),
            7 if s.as_bytes()[4] == b'-' => (&s[..4], &s[5..]),
            _ => return Err(Error::invalid("month", format!("{s:?} is not YYYYMM or YYYY-MM"))),
        };
        let year: i32 = y
            .parse()
            .map_err(|_| Error::invalid("month", format!("bad year in {s:?}")))?;
        let month: u32 = m
            .parse()
            .map_err(|_| Error::invalid("month", format!("bad month in {s:?}")))?;
        Month::new(year, month)
    }
}

impl Serialize for Month {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Inclusive, nonempty range of months.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthRange {
    pub start: Month,
    pub end: Month,
}

impl MonthRange {
    pub fn new(start: Month, end: Month) -> Result<Self> {
        if end < start {
            return Err(Error::invalid("month range", format!("{end} precedes {start}")));
        }
        Ok(MonthRange { start, end })
    }

    pub fn len(&self) -> usize {
        (self.end.since(self.start) + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, m: Month) -> bool {
        self.start <= m && m <= self.end
    }

    pub fn iter(&self) -> impl Iterator<Item = Month> {
        let start = self.start;
        (0..self.len() as i32).map(move |k| start.offset(k))
    }

    /// Smallest range covering both.
    pub fn union(&self, other: &MonthRange) -> MonthRange {
        MonthRange {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_both_forms() {
        let a: Month = "201708".parse().unwrap();
        let b: Month = "2017-08".parse().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.year(), 2017);
        assert_eq!(a.month(), 8);
        assert_eq!(a.to_string(), "2017-08");
        assert_eq!(a.to_yyyymm(), "201708");
    }

    #[test]
    fn rejects_bad_months() {
        assert!("201713".parse::<Month>().is_err());
        assert!("2017-00".parse::<Month>().is_err());
        assert!("17-08".parse::<Month>().is_err());
        assert!("2017/08".parse::<Month>().is_err());
    }

    #[test]
    fn arithmetic_crosses_years() {
        let aug17 = Month::new(2017, 8).unwrap();
        assert_eq!(aug17.offset(-28), Month::new(2015, 4).unwrap());
        assert_eq!(aug17.offset(28), Month::new(2019, 12).unwrap());
        assert_eq!(Month::new(2019, 12).unwrap().since(aug17), 28);
    }

    #[test]
    fn range_len_and_iter() {
        let r = MonthRange::new("2015-04".parse().unwrap(), "2019-12".parse().unwrap()).unwrap();
        assert_eq!(r.len(), 57);
        assert_eq!(r.iter().count(), 57);
        assert!(MonthRange::new(r.end, r.start).is_err());
    }
}
