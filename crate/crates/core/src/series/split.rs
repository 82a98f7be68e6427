use chrono::{DateTime, Duration, Months, Utc};
use serde::{Deserialize, Serialize};

use super::calendar::{day_floor, YearMonth};
use crate::error::{Error, Result};
use crate::ingest::TimeSeries;

/// Chronological train / validation / test layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    /// Length of the trailing test span in calendar months.
    pub test_months: u32,
    /// Share of the pre-test data used for training; the rest validates.
    pub train_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_months: 12,
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: TimeSeries,
    pub validation: TimeSeries,
    pub test: TimeSeries,
    pub validation_start: DateTime<Utc>,
    pub test_start: DateTime<Utc>,
}

fn day_ceil(t: DateTime<Utc>) -> DateTime<Utc> {
    let f = day_floor(t);
    if f == t {
        f
    } else {
        f + Duration::days(1)
    }
}

/// Boundary between training and validation: `fraction` of the span from
/// `start` to `end`, rounded to the nearest midnight and kept at least one
/// day away from either end.
fn fraction_boundary(start: DateTime<Utc>, end: DateTime<Utc>, fraction: f64) -> Result<DateTime<Utc>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let raw = start + Duration::seconds(((end - start).num_seconds() as f64 * fraction).round() as i64);
    let floor = day_floor(raw);
    let rounded = if raw - floor >= Duration::hours(12) {
        floor + Duration::days(1)
    } else {
        floor
    };
    let lo = day_ceil(start + Duration::hours(1));
    let hi = day_floor(end - Duration::hours(1));
    if lo > hi {
        return Err(Error::InsufficientData(format!(
            "span {} .. {} is too short for a day-aligned train/validation split",
            start.to_rfc3339(),
            end.to_rfc3339()
        )));
    }
    Ok(rounded.clamp(lo, hi))
}

/// Splits a series into training and validation parts at a day boundary,
/// training first. Returns the boundary instant as well.
pub fn train_validation_split(ts: &TimeSeries, train_fraction: f64) -> Result<(TimeSeries, TimeSeries, DateTime<Utc>)> {
    let (Some(start), Some(end)) = (ts.start(), ts.end()) else {
        return Err(Error::InsufficientData("cannot split an empty series".into()));
    };
    let boundary = fraction_boundary(start, end, train_fraction)?;
    Ok((ts.slice_time(start, boundary), ts.slice_time(boundary, end), boundary))
}

/// Holds out the trailing `test_months` (starting at a midnight) as the test
/// set and splits what precedes it into training and validation.
pub fn chronological_split(ts: &TimeSeries, spec: &SplitSpec) -> Result<Splits> {
    let (Some(start), Some(end)) = (ts.start(), ts.end()) else {
        return Err(Error::InsufficientData("cannot split an empty series".into()));
    };
    let test_start = end
        .checked_sub_months(Months::new(spec.test_months))
        .map(day_ceil)
        .ok_or_else(|| Error::Config("test span out of calendar range".into()))?;
    if test_start - start < Duration::days(28) {
        return Err(Error::InsufficientData(format!(
            "need a {}-month test span plus at least one month of training data; series covers {} days",
            spec.test_months,
            (end - start).num_days()
        )));
    }
    let prefix = ts.slice_time(start, test_start);
    let (train, validation, validation_start) = train_validation_split(&prefix, spec.train_fraction)?;
    Ok(Splits {
        train,
        validation,
        test: ts.slice_time(test_start, end),
        validation_start,
        test_start,
    })
}

/// The `months` calendar months ending with `terminal`, inclusive. Zero
/// months gives an empty series with the same channels.
pub fn truncate_to_months(ts: &TimeSeries, terminal: YearMonth, months: u32) -> Result<TimeSeries> {
    if months == 0 {
        return Ok(ts.slice_index(0, 0));
    }
    let first = terminal.offset(-(months as i64 - 1));
    let (start, end) = (first.start(), terminal.end());
    let covered = |m: YearMonth| match (ts.start(), ts.end()) {
        (Some(s), Some(e)) => s <= m.start() && m.end() <= e,
        _ => false,
    };
    let missing: Vec<String> = (0..months as i64)
        .map(|k| first.offset(k))
        .filter(|m| !covered(*m))
        .map(|m| m.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingMonths(missing));
    }
    Ok(ts.slice_time(start, end))
}
