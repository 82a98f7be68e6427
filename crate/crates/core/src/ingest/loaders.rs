use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime, TimeZone, Timelike, Utc};

use super::site::SiteSpec;
use super::timeseries::{Resolution, TimeSeries, Unit, DIFFUSE, DIRECT, HUMIDITY, PV};
use crate::error::{Error, Result};

/// Parses an ISO-8601 timestamp. Strings without an offset are taken as UTC.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    const NAIVE: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%d %H:%M",
    ];
    NAIVE
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|n| Utc.from_utc_datetime(&n))
}

fn fmt_time(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, 0, e))
}

fn csv_error(path: &Path, row: usize, e: csv::Error) -> Error {
    let row = e.position().map_or(row, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(format!("reading {}", path.display()), io),
        kind => Error::Csv {
            path: path.to_path_buf(),
            row,
            message: format!("{kind:?}"),
        },
    }
}

fn parse_value(path: &Path, row: usize, field: &str, raw: &str) -> Result<Option<f64>> {
    if raw.is_empty() || raw.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    raw.parse::<f64>().map(Some).map_err(|_| Error::Csv {
        path: path.to_path_buf(),
        row,
        message: format!("cannot parse {field} value `{raw}`"),
    })
}

/// Loads observed PV power from a `(timestamp, power_kw)` CSV.
///
/// The resolution (15 minutes or one hour) is inferred from the spacing of
/// the first two rows. Quarter-hourly files come back at
/// [`Resolution::QuarterHourly`] and need [`crate::series::resample_hourly`]
/// before windowing. Negative readings and empty cells are kept as masked
/// points; absent rows become masked NaN points.
pub fn load_pv_csv(path: impl AsRef<Path>, site: &SiteSpec) -> Result<TimeSeries> {
    let path = path.as_ref();
    site.validate()?;
    let mut reader = open_reader(path)?;
    let mut rows: Vec<(DateTime<Utc>, Vec<f64>, bool)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, 0, e))?;
        let line = record.position().map_or(rows.len() + 2, |p| p.line() as usize);
        if record.len() < 2 {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                row: line,
                message: format!("expected 2 columns, found {}", record.len()),
            });
        }
        let t = parse_timestamp(&record[0]).ok_or_else(|| Error::Csv {
            path: path.to_path_buf(),
            row: line,
            message: format!("unparseable timestamp `{}`", &record[0]),
        })?;
        if let Some((prev, _, _)) = rows.last() {
            if t == *prev {
                return Err(Error::DuplicateTimestamp(fmt_time(&t)));
            }
            if t < *prev {
                return Err(Error::Csv {
                    path: path.to_path_buf(),
                    row: line,
                    message: format!("rows not sorted: {} follows {}", fmt_time(&t), fmt_time(prev)),
                });
            }
        }
        let power = parse_value(path, line, "power", &record[1])?;
        match power {
            Some(p) => rows.push((t, vec![p], p >= 0.0)),
            None => rows.push((t, vec![f64::NAN], false)),
        }
    }
    if rows.is_empty() {
        return Err(Error::InsufficientData(format!("{} has no data rows", path.display())));
    }
    let resolution = match rows.get(1).map(|r| r.0 - rows[0].0) {
        None => Resolution::Hourly,
        Some(d) if d == Duration::minutes(15) => Resolution::QuarterHourly,
        Some(d) if d == Duration::hours(1) => Resolution::Hourly,
        Some(d) => {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                row: 3,
                message: format!("unsupported resolution of {} minutes", d.num_minutes()),
            })
        }
    };
    TimeSeries::from_rows(resolution, &[(PV, Unit::Kilowatt)], &rows)
}

/// Forecast weather keyed by valid time, plus counts of skipped rows.
#[derive(Debug, Clone)]
pub struct ForecastWeather {
    pub series: TimeSeries,
    /// Rows whose reference time is not 00:00.
    pub rejected_rows: usize,
    /// 00:00-referenced rows more than 23 hours ahead of their reference.
    pub beyond_horizon: usize,
}

const FORECAST_COLUMNS: [&str; 5] = ["forecast_reference_time", "valid_time", HUMIDITY, DIRECT, DIFFUSE];

/// Loads 00:00-referenced weather forecasts from a CSV with columns
/// `forecast_reference_time, valid_time, relative_humidity,
/// direct_radiation, diffuse_radiation` (any order, matched by header).
///
/// Each accepted reference day contributes the 24 hours 00:00-23:00 that
/// follow it; hours absent from the file are masked.
pub fn load_weather_forecast_csv(path: impl AsRef<Path>) -> Result<ForecastWeather> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, 1, e))?.clone();
    let idx: Vec<usize> = FORECAST_COLUMNS
        .iter()
        .map(|name| {
            headers.iter().position(|h| h == *name).ok_or_else(|| Error::Csv {
                path: path.to_path_buf(),
                row: 1,
                message: format!("missing column `{name}`"),
            })
        })
        .collect::<Result<_>>()?;

    let mut by_time: BTreeMap<DateTime<Utc>, (Vec<f64>, bool)> = BTreeMap::new();
    let mut rejected_rows = 0;
    let mut beyond_horizon = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, 0, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |k: usize| record.get(idx[k]).unwrap_or("");
        let time = |k: usize| {
            parse_timestamp(field(k)).ok_or_else(|| Error::Csv {
                path: path.to_path_buf(),
                row: line,
                message: format!("unparseable {} `{}`", FORECAST_COLUMNS[k], field(k)),
            })
        };
        let reference = time(0)?;
        if reference.hour() != 0 || reference.minute() != 0 || reference.second() != 0 {
            rejected_rows += 1;
            continue;
        }
        let valid = time(1)?;
        let lead = valid - reference;
        if lead < Duration::zero() || lead >= Duration::hours(24) || valid.minute() != 0 {
            beyond_horizon += 1;
            continue;
        }
        let mut values = Vec::with_capacity(3);
        let mut ok = true;
        for (k, name) in FORECAST_COLUMNS.iter().enumerate().skip(2) {
            match parse_value(path, line, name, field(k))? {
                Some(v) => values.push(v),
                None => {
                    values.push(f64::NAN);
                    ok = false;
                }
            }
        }
        if by_time.insert(valid, (values, ok)).is_some() {
            return Err(Error::DuplicateTimestamp(fmt_time(&valid)));
        }
    }
    if rejected_rows > 0 {
        log::warn!(
            "{}: skipped {rejected_rows} rows not referenced at 00:00",
            path.display()
        );
    }

    let channels = [
        (HUMIDITY, Unit::Percent),
        (DIRECT, Unit::WattsPerSquareMeter),
        (DIFFUSE, Unit::WattsPerSquareMeter),
    ];
    let mut rows: Vec<(DateTime<Utc>, Vec<f64>, bool)> = by_time.into_iter().map(|(t, (v, ok))| (t, v, ok)).collect();
    // pad the first and last reference days out to full 00:00-23:00 blocks
    if let (Some(first), Some(last)) = (rows.first().map(|r| r.0), rows.last().map(|r| r.0)) {
        let day_start = first.date_naive().and_hms_opt(0, 0, 0).unwrap().and_utc();
        let day_end = last.date_naive().and_hms_opt(23, 0, 0).unwrap().and_utc();
        if day_start < first {
            rows.insert(0, (day_start, vec![f64::NAN; 3], false));
        }
        if day_end > last {
            rows.push((day_end, vec![f64::NAN; 3], false));
        }
    }
    let series = TimeSeries::from_rows(Resolution::Hourly, &channels, &rows)?;
    Ok(ForecastWeather {
        series,
        rejected_rows,
        beyond_horizon,
    })
}

fn fmt_value(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

/// Writes the PV channel in the schema [`load_pv_csv`] reads. Masked points
/// are written with an empty power cell.
pub fn write_pv_csv(ts: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let pv = ts
        .values(PV)
        .ok_or_else(|| Error::InvalidSeries("series has no PV channel".into()))?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, 0, e))?;
    w.write_record(["timestamp", "power_kw"])
        .map_err(|e| csv_error(path, 0, e))?;
    for (i, t) in ts.timestamps().iter().enumerate() {
        let value = if ts.valid()[i] { fmt_value(pv[i]) } else { String::new() };
        w.write_record([fmt_time(t), value])
            .map_err(|e| csv_error(path, 0, e))?;
    }
    w.flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Writes weather channels as 00:00-referenced forecasts in the schema
/// [`load_weather_forecast_csv`] reads: each hour's reference time is
/// midnight of its own UTC day.
pub fn write_weather_forecast_csv(ts: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let cols = [HUMIDITY, DIRECT, DIFFUSE]
        .iter()
        .map(|n| {
            ts.values(n)
                .ok_or_else(|| Error::InvalidSeries(format!("series has no `{n}` channel")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, 0, e))?;
    w.write_record(FORECAST_COLUMNS).map_err(|e| csv_error(path, 0, e))?;
    for (i, t) in ts.timestamps().iter().enumerate() {
        if !ts.valid()[i] {
            continue;
        }
        let reference = t.date_naive().and_hms_opt(0, 0, 0).unwrap().and_utc();
        let mut rec = vec![fmt_time(&reference), fmt_time(t)];
        rec.extend(cols.iter().map(|c| fmt_value(c[i])));
        w.write_record(&rec).map_err(|e| csv_error(path, 0, e))?;
    }
    w.flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn site() -> SiteSpec {
        SiteSpec::new(52.0, 5.0, 35.0, 0.0, 2.5).unwrap()
    }

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn timestamps_in_common_forms() {
        let want = Utc.with_ymd_and_hms(2020, 3, 1, 12, 0, 0).unwrap();
        for s in [
            "2020-03-01T12:00:00Z",
            "2020-03-01T13:00:00+01:00",
            "2020-03-01T12:00",
            "2020-03-01 12:00:00",
        ] {
            assert_eq!(parse_timestamp(s), Some(want), "{s}");
        }
        assert_eq!(parse_timestamp("01/03/2020"), None);
    }

    #[test]
    fn quarter_hour_rows_pass_through() {
        let f = file("timestamp,power_kw\n2020-06-01T12:00:00Z,1\n2020-06-01T12:15:00Z,1\n2020-06-01T12:30:00Z,3\n2020-06-01T12:45:00Z,3\n");
        let ts = load_pv_csv(f.path(), &site()).unwrap();
        assert_eq!(ts.resolution(), Resolution::QuarterHourly);
        assert_eq!(ts.len(), 4);
        assert_eq!(ts.values(PV).unwrap(), &[1.0, 1.0, 3.0, 3.0]);
    }

    #[test]
    fn negative_power_is_masked_not_dropped() {
        let f =
            file("timestamp,power_kw\n2020-06-01T12:00:00Z,0.5\n2020-06-01T13:00:00Z,-0.1\n2020-06-01T14:00:00Z,0.7\n");
        let ts = load_pv_csv(f.path(), &site()).unwrap();
        assert_eq!(ts.len(), 3);
        assert_eq!(ts.valid(), &[true, false, true]);
        assert_eq!(ts.values(PV).unwrap()[1], -0.1);
    }

    #[test]
    fn duplicate_timestamp_is_named() {
        let f = file("timestamp,power_kw\n2020-06-01T12:00:00Z,0.5\n2020-06-01T12:00:00Z,0.6\n");
        match load_pv_csv(f.path(), &site()) {
            Err(Error::DuplicateTimestamp(t)) => assert_eq!(t, "2020-06-01T12:00:00Z"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_rows_are_rejected_with_row_number() {
        let f = file("timestamp,power_kw\n2020-06-01T12:00:00Z,0.5\nnot-a-time,0.6\n");
        match load_pv_csv(f.path(), &site()) {
            Err(Error::Csv { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
        let f = file("timestamp,power_kw\n2020-06-01T13:00:00Z,0.5\n2020-06-01T12:00:00Z,0.6\n");
        assert!(matches!(load_pv_csv(f.path(), &site()), Err(Error::Csv { row: 3, .. })));
        let f = file("timestamp,power_kw\n");
        assert!(matches!(
            load_pv_csv(f.path(), &site()),
            Err(Error::InsufficientData(_))
        ));
    }

    fn forecast_file(reference_hour: u32, skip_hour: Option<u32>) -> tempfile::NamedTempFile {
        let mut s =
            String::from("forecast_reference_time,valid_time,relative_humidity,direct_radiation,diffuse_radiation\n");
        for h in 0..24 {
            if Some(h) == skip_hour {
                continue;
            }
            s.push_str(&format!(
                "2020-05-01T{reference_hour:02}:00:00Z,2020-05-01T{h:02}:00:00Z,60,{},{}\n",
                h * 10,
                h
            ));
        }
        file(&s)
    }

    #[test]
    fn one_reference_day_gives_24_hours() {
        let fw = load_weather_forecast_csv(forecast_file(0, None).path()).unwrap();
        assert_eq!(fw.series.len(), 24);
        assert_eq!(fw.series.valid_count(), 24);
        assert_eq!(fw.rejected_rows, 0);
        assert_eq!(fw.series.values(DIRECT).unwrap()[5], 50.0);
    }

    #[test]
    fn non_midnight_references_are_rejected() {
        let fw = load_weather_forecast_csv(forecast_file(6, None).path()).unwrap();
        assert!(fw.series.is_empty());
        assert_eq!(fw.rejected_rows, 24);
    }

    #[test]
    fn missing_hour_is_masked() {
        let fw = load_weather_forecast_csv(forecast_file(0, Some(13)).path()).unwrap();
        assert_eq!(fw.series.len(), 24);
        assert_eq!(fw.series.valid_count(), 23);
        assert!(!fw.series.valid()[13]);
        let fw = load_weather_forecast_csv(forecast_file(0, Some(23)).path()).unwrap();
        assert_eq!(fw.series.len(), 24);
        assert_eq!(fw.series.valid_count(), 23);
    }

    #[test]
    fn pv_writer_round_trips() {
        let f = file("timestamp,power_kw\n2020-06-01T12:00:00Z,0.5\n2020-06-01T13:00:00Z,-0.1\n2020-06-01T14:00:00Z,0.123456789\n");
        let ts = load_pv_csv(f.path(), &site()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_pv_csv(&ts, out.path()).unwrap();
        let back = load_pv_csv(out.path(), &site()).unwrap();
        assert_eq!(back.timestamps(), ts.timestamps());
        assert_eq!(back.valid(), ts.valid());
        assert_eq!(back.values(PV).unwrap()[2], 0.123456789);
    }
}
