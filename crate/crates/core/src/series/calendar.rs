use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A calendar month, ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Config(format!("month {month} out of range")));
        }
        Ok(YearMonth { year, month })
    }

    pub fn of(t: &DateTime<Utc>) -> Self {
        YearMonth {
            year: t.year(),
            month: t.month(),
        }
    }

    fn index(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_index(i: i64) -> Self {
        YearMonth {
            year: i.div_euclid(12) as i32,
            month: (i.rem_euclid(12) + 1) as u32,
        }
    }

    /// Month shifted by `n` (negative moves back in time).
    pub fn offset(self, n: i64) -> Self {
        YearMonth::from_index(self.index() + n)
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).unwrap()
    }

    /// First instant of the month, UTC.
    pub fn start(self) -> DateTime<Utc> {
        self.first_day().and_hms_opt(0, 0, 0).unwrap().and_utc()
    }

    /// First instant of the following month, UTC.
    pub fn end(self) -> DateTime<Utc> {
        self.offset(1).start()
    }

    pub fn days(self) -> i64 {
        (self.end() - self.start()).num_days()
    }

    /// Months from `self` to `other` inclusive of both ends, when ordered.
    pub fn months_until(self, other: YearMonth) -> i64 {
        other.index() - self.index()
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("expected YYYY-MM, got `{s}`"));
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        YearMonth::new(y.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?)
    }
}

impl Serialize for YearMonth {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Midnight (UTC) at or before `t`.
pub fn day_floor(t: DateTime<Utc>) -> DateTime<Utc> {
    t.date_naive().and_hms_opt(0, 0, 0).unwrap().and_utc()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_wrap_years() {
        let dec = YearMonth::new(2019, 12).unwrap();
        assert_eq!(dec.offset(-2), YearMonth::new(2019, 10).unwrap());
        assert_eq!(dec.offset(1), YearMonth::new(2020, 1).unwrap());
        assert_eq!(
            YearMonth::new(2020, 1).unwrap().offset(-13),
            YearMonth::new(2018, 12).unwrap()
        );
        assert_eq!(YearMonth::new(2020, 2).unwrap().days(), 29);
        assert_eq!("2019-04".parse::<YearMonth>().unwrap().to_string(), "2019-04");
        assert!("2019-13".parse::<YearMonth>().is_err());
    }
}
