use chrono::{DateTime, Duration, Utc};

use crate::error::{Error, Result};
use crate::ingest::{Channel, Resolution, TimeSeries};

/// Minimum valid quarter-hour readings for an hour to count as observed.
const MIN_VALID_QUARTERS: usize = 3;

fn hour_floor(t: DateTime<Utc>) -> DateTime<Utc> {
    let secs = t.timestamp();
    DateTime::from_timestamp(secs - secs.rem_euclid(3600), 0).unwrap()
}

/// Averages quarter-hourly readings into hourly values. An hour with fewer
/// than three valid quarters is masked.
pub fn resample_hourly(ts: &TimeSeries) -> Result<TimeSeries> {
    if ts.resolution() != Resolution::QuarterHourly {
        return Err(Error::Precondition(format!(
            "resample_hourly expects 15-minute input, got {:?}",
            ts.resolution()
        )));
    }
    let channels: Vec<_> = ts.channels().iter().map(|c| (c.name.as_str(), c.unit)).collect();
    let (Some(first), Some(last)) = (ts.start(), ts.timestamps().last().copied()) else {
        return Ok(TimeSeries::empty(Resolution::Hourly, &channels));
    };
    let first_hour = hour_floor(first);
    let hours = ((hour_floor(last) - first_hour).num_hours() + 1) as usize;

    let mut sums = vec![vec![0.0; hours]; channels.len()];
    let mut counts = vec![0usize; hours];
    for (i, t) in ts.timestamps().iter().enumerate() {
        if !ts.valid()[i] {
            continue;
        }
        let h = (hour_floor(*t) - first_hour).num_hours() as usize;
        counts[h] += 1;
        for (k, ch) in ts.channels().iter().enumerate() {
            sums[k][h] += ch.values[i];
        }
    }
    let valid: Vec<bool> = counts.iter().map(|c| *c >= MIN_VALID_QUARTERS).collect();
    let out_channels = ts
        .channels()
        .iter()
        .zip(sums)
        .map(|(ch, s)| {
            let values = s
                .iter()
                .zip(&counts)
                .map(|(sum, n)| {
                    if *n >= MIN_VALID_QUARTERS {
                        sum / *n as f64
                    } else {
                        f64::NAN
                    }
                })
                .collect();
            Channel::new(ch.name.clone(), ch.unit, values)
        })
        .collect();
    let timestamps = (0..hours).map(|h| first_hour + Duration::hours(h as i64)).collect();
    TimeSeries::new(Resolution::Hourly, timestamps, out_channels, valid)
}
