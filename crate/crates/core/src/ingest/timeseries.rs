use chrono::{DateTime, Duration, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PV: &str = "pv_power";
pub const HUMIDITY: &str = "relative_humidity";
pub const DIRECT: &str = "direct_radiation";
pub const DIFFUSE: &str = "diffuse_radiation";
pub const WEATHER_CHANNELS: [&str; 3] = [HUMIDITY, DIRECT, DIFFUSE];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Resolution {
    QuarterHourly,
    Hourly,
}

impl Resolution {
    pub fn step(self) -> Duration {
        match self {
            Resolution::QuarterHourly => Duration::minutes(15),
            Resolution::Hourly => Duration::hours(1),
        }
    }

    fn aligned(self, t: &DateTime<Utc>) -> bool {
        let on_minute = t.second() == 0 && t.nanosecond() == 0;
        match self {
            Resolution::QuarterHourly => on_minute && t.minute().is_multiple_of(15),
            Resolution::Hourly => on_minute && t.minute() == 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    Kilowatt,
    Percent,
    WattsPerSquareMeter,
    Dimensionless,
}

impl Unit {
    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Kilowatt => "kW",
            Unit::Percent => "%",
            Unit::WattsPerSquareMeter => "W/m2",
            Unit::Dimensionless => "1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub unit: Unit,
    pub values: Vec<f64>,
}

impl Channel {
    pub fn new(name: impl Into<String>, unit: Unit, values: Vec<f64>) -> Self {
        Channel {
            name: name.into(),
            unit,
            values,
        }
    }
}

/// Regularly spaced, UTC-stamped multi-channel series.
///
/// Timestamps form a gap-free grid at the series resolution; missing
/// observations are kept as grid points with a `false` validity flag. A
/// masked point may hold any value (loaders use NaN for absent readings and
/// keep the raw value for rejected ones). Valid points are finite in every
/// channel, and the PV channel is non-negative where valid while in kW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    resolution: Resolution,
    timestamps: Vec<DateTime<Utc>>,
    channels: Vec<Channel>,
    valid: Vec<bool>,
}

impl TimeSeries {
    pub fn new(
        resolution: Resolution,
        timestamps: Vec<DateTime<Utc>>,
        channels: Vec<Channel>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let ts = TimeSeries {
            resolution,
            timestamps,
            channels,
            valid,
        };
        ts.check()?;
        Ok(ts)
    }

    pub fn empty(resolution: Resolution, channels: &[(&str, Unit)]) -> Self {
        TimeSeries {
            resolution,
            timestamps: Vec::new(),
            channels: channels.iter().map(|(n, u)| Channel::new(*n, *u, Vec::new())).collect(),
            valid: Vec::new(),
        }
    }

    /// Builds a series from sparse rows, inserting masked NaN points for
    /// every grid instant between the first and last row that has no row.
    /// Rows must be strictly increasing and aligned to the resolution.
    pub fn from_rows(
        resolution: Resolution,
        channels: &[(&str, Unit)],
        rows: &[(DateTime<Utc>, Vec<f64>, bool)],
    ) -> Result<Self> {
        let mut ts = TimeSeries::empty(resolution, channels);
        let Some(first) = rows.first() else {
            return Ok(ts);
        };
        let step = resolution.step();
        let mut expected = first.0;
        for (i, (t, values, ok)) in rows.iter().enumerate() {
            if values.len() != channels.len() {
                return Err(Error::Shape(format!(
                    "row {i} has {} values for {} channels",
                    values.len(),
                    channels.len()
                )));
            }
            if i > 0 {
                let prev = rows[i - 1].0;
                if *t == prev {
                    return Err(Error::DuplicateTimestamp(t.to_rfc3339()));
                }
                if *t < prev {
                    return Err(Error::InvalidSeries(format!(
                        "timestamps not sorted: {} follows {}",
                        t.to_rfc3339(),
                        prev.to_rfc3339()
                    )));
                }
            }
            if !resolution.aligned(t) {
                return Err(Error::InvalidSeries(format!(
                    "timestamp {} is not aligned to {:?} resolution",
                    t.to_rfc3339(),
                    resolution
                )));
            }
            while expected < *t {
                ts.push_raw(expected, None, false);
                expected += step;
            }
            ts.push_raw(*t, Some(values), *ok);
            expected = *t + step;
        }
        ts.check()?;
        Ok(ts)
    }

    fn push_raw(&mut self, t: DateTime<Utc>, values: Option<&[f64]>, ok: bool) {
        self.timestamps.push(t);
        for (k, ch) in self.channels.iter_mut().enumerate() {
            ch.values.push(values.map_or(f64::NAN, |v| v[k]));
        }
        let finite = values.is_some_and(|v| v.iter().all(|x| x.is_finite()));
        self.valid.push(ok && finite);
    }

    fn check(&self) -> Result<()> {
        let n = self.timestamps.len();
        if self.valid.len() != n {
            return Err(Error::InvalidSeries(format!(
                "gap mask has {} entries for {n} timestamps",
                self.valid.len()
            )));
        }
        for (i, ch) in self.channels.iter().enumerate() {
            if ch.values.len() != n {
                return Err(Error::InvalidSeries(format!(
                    "channel `{}` has {} values for {n} timestamps",
                    ch.name,
                    ch.values.len()
                )));
            }
            if self.channels[..i].iter().any(|c| c.name == ch.name) {
                return Err(Error::InvalidSeries(format!("duplicate channel `{}`", ch.name)));
            }
        }
        let step = self.resolution.step();
        for w in self.timestamps.windows(2) {
            if w[1] == w[0] {
                return Err(Error::DuplicateTimestamp(w[1].to_rfc3339()));
            }
            if w[1] - w[0] != step {
                return Err(Error::InvalidSeries(format!(
                    "irregular spacing between {} and {}",
                    w[0].to_rfc3339(),
                    w[1].to_rfc3339()
                )));
            }
        }
        if let Some(t) = self.timestamps.first() {
            if !self.resolution.aligned(t) {
                return Err(Error::InvalidSeries(format!(
                    "timestamp {} is not aligned to {:?} resolution",
                    t.to_rfc3339(),
                    self.resolution
                )));
            }
        }
        for i in 0..n {
            if !self.valid[i] {
                continue;
            }
            for ch in &self.channels {
                let v = ch.values[i];
                if !v.is_finite() {
                    return Err(Error::InvalidSeries(format!(
                        "valid point {} of `{}` is not finite",
                        self.timestamps[i].to_rfc3339(),
                        ch.name
                    )));
                }
                if ch.name == PV && ch.unit == Unit::Kilowatt && v < 0.0 {
                    return Err(Error::InvalidSeries(format!(
                        "negative PV power {v} at {} is not masked",
                        self.timestamps[i].to_rfc3339()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[DateTime<Utc>] {
        &self.timestamps
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel_names(&self) -> Vec<&str> {
        self.channels.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn channel(&self, name: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn values(&self, name: &str) -> Option<&[f64]> {
        self.channel(name).map(|c| c.values.as_slice())
    }

    pub fn start(&self) -> Option<DateTime<Utc>> {
        self.timestamps.first().copied()
    }

    /// Instant just past the last grid point.
    pub fn end(&self) -> Option<DateTime<Utc>> {
        self.timestamps.last().map(|t| *t + self.resolution.step())
    }

    pub fn index_of(&self, t: DateTime<Utc>) -> Option<usize> {
        let start = self.start()?;
        let step = self.resolution.step().num_seconds();
        let offset = (t - start).num_seconds();
        if offset < 0 || offset % step != 0 {
            return None;
        }
        let i = (offset / step) as usize;
        (i < self.len()).then_some(i)
    }

    /// Points with `start <= t < end`.
    pub fn slice_time(&self, start: DateTime<Utc>, end: DateTime<Utc>) -> TimeSeries {
        let lo = self.timestamps.partition_point(|t| *t < start);
        let hi = self.timestamps.partition_point(|t| *t < end).max(lo);
        self.slice_index(lo, hi)
    }

    pub fn slice_index(&self, lo: usize, hi: usize) -> TimeSeries {
        TimeSeries {
            resolution: self.resolution,
            timestamps: self.timestamps[lo..hi].to_vec(),
            channels: self
                .channels
                .iter()
                .map(|c| Channel::new(c.name.clone(), c.unit, c.values[lo..hi].to_vec()))
                .collect(),
            valid: self.valid[lo..hi].to_vec(),
        }
    }

    /// Keeps only the named channels, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<TimeSeries> {
        let channels = names
            .iter()
            .map(|n| {
                self.channel(n)
                    .cloned()
                    .ok_or_else(|| Error::InvalidSeries(format!("missing channel `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TimeSeries {
            resolution: self.resolution,
            timestamps: self.timestamps.clone(),
            channels,
            valid: self.valid.clone(),
        })
    }

    /// Joins the channels of two series over their common time span. A point
    /// is valid only where both inputs are valid.
    pub fn merge(&self, other: &TimeSeries) -> Result<TimeSeries> {
        if self.resolution != other.resolution {
            return Err(Error::InvalidSeries(
                "cannot merge series of different resolution".into(),
            ));
        }
        let (Some(a0), Some(b0)) = (self.start(), other.start()) else {
            let mut names: Vec<(&str, Unit)> = self.channels.iter().map(|c| (c.name.as_str(), c.unit)).collect();
            names.extend(other.channels.iter().map(|c| (c.name.as_str(), c.unit)));
            return Ok(TimeSeries::empty(self.resolution, &names));
        };
        let start = a0.max(b0);
        let end = self.end().unwrap().min(other.end().unwrap());
        let a = self.slice_time(start, end);
        let b = other.slice_time(start, end);
        let valid = a.valid.iter().zip(&b.valid).map(|(x, y)| *x && *y).collect();
        let mut channels = a.channels;
        channels.extend(b.channels);
        TimeSeries::new(self.resolution, a.timestamps, channels, valid)
    }

    /// Replaces channel values, keeping timestamps and mask. Used by transforms
    /// such as scaling that change units.
    pub fn with_channels(&self, channels: Vec<Channel>) -> Result<TimeSeries> {
        TimeSeries::new(self.resolution, self.timestamps.clone(), channels, self.valid.clone())
    }

    /// Same series with additional points masked.
    pub fn with_mask(&self, valid: Vec<bool>) -> Result<TimeSeries> {
        if valid.len() != self.len() {
            return Err(Error::Shape("mask length differs from series length".into()));
        }
        let valid = valid.iter().zip(&self.valid).map(|(a, b)| *a && *b).collect();
        TimeSeries::new(self.resolution, self.timestamps.clone(), self.channels.clone(), valid)
    }
}
