use chrono::{NaiveDateTime, TimeZone, Utc};
use serde_json::Value;

use super::http::ApiClient;
use super::site::YearRange;
use super::timeseries::{Resolution, TimeSeries, Unit, DIFFUSE, DIRECT, HUMIDITY};
use crate::error::{Error, Result};

pub const OPENMETEO_ARCHIVE_URL: &str = "https://archive-api.open-meteo.com/v1/archive";

/// First year covered by the archive (ERA5).
const ARCHIVE_FIRST_YEAR: i32 = 1940;

/// Response variable name and the channel it feeds.
const VARIABLES: [(&str, &str, Unit); 3] = [
    ("relative_humidity_2m", HUMIDITY, Unit::Percent),
    ("direct_radiation", DIRECT, Unit::WattsPerSquareMeter),
    ("diffuse_radiation", DIFFUSE, Unit::WattsPerSquareMeter),
];

pub(crate) fn openmeteo_query(latitude: f64, longitude: f64, years: &YearRange) -> Vec<(String, String)> {
    vec![
        ("latitude".into(), latitude.to_string()),
        ("longitude".into(), longitude.to_string()),
        ("start_date".into(), format!("{:04}-01-01", years.start_year)),
        ("end_date".into(), format!("{:04}-12-31", years.end_year)),
        (
            "hourly".into(),
            VARIABLES.iter().map(|v| v.0).collect::<Vec<_>>().join(","),
        ),
        ("timezone".into(), "UTC".into()),
    ]
}

impl ApiClient {
    /// Observed hourly humidity and direct/diffuse radiation from the
    /// Open-Meteo archive.
    pub fn fetch_openmeteo_history(&self, latitude: f64, longitude: f64, years: &YearRange) -> Result<TimeSeries> {
        if !(-90.0..=90.0).contains(&latitude) || !(-180.0..=180.0).contains(&longitude) {
            return Err(Error::Config(format!("invalid coordinates ({latitude}, {longitude})")));
        }
        if years.start_year < ARCHIVE_FIRST_YEAR {
            return Err(Error::Precondition(format!(
                "archive starts in {ARCHIVE_FIRST_YEAR} (requested {})",
                years.start_year
            )));
        }
        let query = openmeteo_query(latitude, longitude, years);
        let body = self.get_body(OPENMETEO_ARCHIVE_URL, &query, |status, body| {
            let reason = serde_json::from_slice::<Value>(body)
                .ok()
                .and_then(|v| v.get("reason").and_then(Value::as_str).map(str::to_string))
                .unwrap_or_else(|| String::from_utf8_lossy(body).into_owned());
            Error::Network {
                url: OPENMETEO_ARCHIVE_URL.to_string(),
                retryable: false,
                message: format!("HTTP {status}: {reason}"),
            }
        })?;
        parse_openmeteo_response(&body)
    }

    pub fn openmeteo_cached(&self, latitude: f64, longitude: f64, years: &YearRange) -> bool {
        let key = super::cache::Cache::key(OPENMETEO_ARCHIVE_URL, &openmeteo_query(latitude, longitude, years));
        self.cache().is_some_and(|c| c.contains(&key))
    }
}

/// Parses an archive response into three hourly weather channels. `null`
/// values become masked points.
pub fn parse_openmeteo_response(body: &[u8]) -> Result<TimeSeries> {
    let root: Value = serde_json::from_slice(body).map_err(|e| Error::parse("<body>", e.to_string()))?;
    let hourly = root.get("hourly").ok_or_else(|| Error::parse("hourly", "missing"))?;
    let times = hourly
        .get("time")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::parse("hourly.time", "missing or not an array"))?;
    let columns = VARIABLES
        .iter()
        .map(|(var, _, _)| {
            let field = format!("hourly.{var}");
            let col = hourly
                .get(*var)
                .and_then(Value::as_array)
                .ok_or_else(|| Error::parse(field.clone(), "variable missing from response"))?;
            if col.len() != times.len() {
                return Err(Error::parse(
                    field,
                    format!("{} values for {} times", col.len(), times.len()),
                ));
            }
            Ok(col)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(times.len());
    for (i, t) in times.iter().enumerate() {
        let s = t
            .as_str()
            .ok_or_else(|| Error::parse(format!("hourly.time[{i}]"), "not a string"))?;
        let naive = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M")
            .map_err(|e| Error::parse(format!("hourly.time[{i}]"), format!("`{s}`: {e}")))?;
        let mut values = Vec::with_capacity(3);
        let mut ok = true;
        for (k, col) in columns.iter().enumerate() {
            match &col[i] {
                Value::Null => {
                    values.push(f64::NAN);
                    ok = false;
                }
                v => values.push(
                    v.as_f64()
                        .ok_or_else(|| Error::parse(format!("hourly.{}[{i}]", VARIABLES[k].0), "not a number"))?,
                ),
            }
        }
        rows.push((Utc.from_utc_datetime(&naive), values, ok));
    }
    let channels: Vec<(&str, Unit)> = VARIABLES.iter().map(|(_, c, u)| (*c, *u)).collect();
    TimeSeries::from_rows(Resolution::Hourly, &channels, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passes_values_through() {
        let body = br#"{"hourly":{"time":["2019-06-01T12:00","2019-06-01T13:00"],
            "relative_humidity_2m":[55,null],"direct_radiation":[500.5,400],"diffuse_radiation":[100,90]}}"#;
        let ts = parse_openmeteo_response(body).unwrap();
        assert_eq!(ts.channels().len(), 3);
        assert_eq!(ts.values(HUMIDITY).unwrap()[0], 55.0);
        assert_eq!(ts.values(DIRECT).unwrap()[0], 500.5);
        assert_eq!(ts.valid(), &[true, false]);
    }

    #[test]
    fn missing_variable_is_named() {
        let body = br#"{"hourly":{"time":["2019-06-01T12:00"],"relative_humidity_2m":[55],"diffuse_radiation":[100]}}"#;
        match parse_openmeteo_response(body) {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "hourly.direct_radiation"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn query_covers_whole_years() {
        let q = openmeteo_query(52.0, 5.0, &YearRange::new(2005, 2018).unwrap());
        assert!(q.contains(&("start_date".to_string(), "2005-01-01".to_string())));
        assert!(q.contains(&("end_date".to_string(), "2018-12-31".to_string())));
        assert!(q.contains(&(
            "hourly".to_string(),
            "relative_humidity_2m,direct_radiation,diffuse_radiation".to_string()
        )));
        assert!(q.contains(&("timezone".to_string(), "UTC".to_string())));
    }
}
