use chrono::{NaiveDateTime, TimeZone, Timelike, Utc};
use serde_json::Value;

use super::http::ApiClient;
use super::site::{SiteSpec, YearRange, PVGIS_FIRST_YEAR};
use super::timeseries::{Resolution, TimeSeries, Unit, PV};
use crate::error::{Error, Result};

pub const PVGIS_SERIESCALC_URL: &str = "https://re.jrc.ec.europa.eu/api/v5_2/seriescalc";

/// Loss fraction as the percentage PVGIS expects, rounded to drop binary noise.
fn loss_percent(fraction: f64) -> f64 {
    (fraction * 100.0 * 1e6).round() / 1e6
}

pub(crate) fn pvgis_query(site: &SiteSpec, years: &YearRange) -> Vec<(String, String)> {
    [
        ("lat", site.latitude.to_string()),
        ("lon", site.longitude.to_string()),
        ("startyear", years.start_year.to_string()),
        ("endyear", years.end_year.to_string()),
        ("pvcalculation", "1".to_string()),
        ("peakpower", site.peak_power.to_string()),
        ("loss", loss_percent(site.loss_fraction).to_string()),
        ("angle", site.tilt.to_string()),
        ("aspect", site.azimuth.to_string()),
        ("outputformat", "json".to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

impl ApiClient {
    /// Simulated hourly PV output for `site` over `years`, in kW.
    ///
    /// When `evaluation` is given, the request is refused unless `years`
    /// ends strictly before the evaluation period begins.
    pub fn fetch_pvgis_series(
        &self,
        site: &SiteSpec,
        years: &YearRange,
        evaluation: Option<&YearRange>,
    ) -> Result<TimeSeries> {
        site.validate()?;
        if years.start_year < PVGIS_FIRST_YEAR {
            return Err(Error::Precondition(format!(
                "PVGIS has no data before {PVGIS_FIRST_YEAR} (requested {})",
                years.start_year
            )));
        }
        if let Some(eval) = evaluation {
            years.ensure_precedes(eval)?;
        }
        let query = pvgis_query(site, years);
        let body = self.get_body(PVGIS_SERIESCALC_URL, &query, |status, body| {
            classify_pvgis_error(site, status, body)
        })?;
        parse_pvgis_response(&body)
    }

    pub fn pvgis_cached(&self, site: &SiteSpec, years: &YearRange) -> bool {
        let key = super::cache::Cache::key(PVGIS_SERIESCALC_URL, &pvgis_query(site, years));
        self.cache().is_some_and(|c| c.contains(&key))
    }
}

fn classify_pvgis_error(site: &SiteSpec, status: u16, body: &[u8]) -> Error {
    let message = serde_json::from_slice::<Value>(body)
        .ok()
        .and_then(|v| v.get("message").and_then(Value::as_str).map(str::to_string))
        .unwrap_or_else(|| String::from_utf8_lossy(body).into_owned());
    let lower = message.to_lowercase();
    if status == 400 && (lower.contains("sea") || lower.contains("location") || lower.contains("no data")) {
        Error::NoDataForLocation {
            latitude: site.latitude,
            longitude: site.longitude,
            message,
        }
    } else {
        Error::Network {
            url: PVGIS_SERIESCALC_URL.to_string(),
            retryable: false,
            message: format!("HTTP {status}: {message}"),
        }
    }
}

fn parse_pvgis_time(s: &str) -> Option<chrono::DateTime<Utc>> {
    let naive = NaiveDateTime::parse_from_str(s, "%Y%m%d:%H%M").ok()?;
    let hour = naive.with_minute(0)?;
    Some(Utc.from_utc_datetime(&hour))
}

/// Parses a `seriescalc` JSON body into an hourly PV series in kW.
///
/// PVGIS stamps each hour at an offset within the hour (`HH:10` for
/// SARAH data); the stamp is floored to the hour.
pub fn parse_pvgis_response(body: &[u8]) -> Result<TimeSeries> {
    let root: Value = serde_json::from_slice(body).map_err(|e| Error::parse("<body>", e.to_string()))?;
    let hourly = root
        .get("outputs")
        .ok_or_else(|| Error::parse("outputs", "missing"))?
        .get("hourly")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::parse("outputs.hourly", "missing or not an array"))?;
    let mut rows = Vec::with_capacity(hourly.len());
    for (i, rec) in hourly.iter().enumerate() {
        let time = rec
            .get("time")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::parse(format!("outputs.hourly[{i}].time"), "missing"))?;
        let t = parse_pvgis_time(time)
            .ok_or_else(|| Error::parse(format!("outputs.hourly[{i}].time"), format!("bad timestamp `{time}`")))?;
        let watts = rec
            .get("P")
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::parse(format!("outputs.hourly[{i}].P"), "missing or not a number"))?;
        let kw = watts / 1000.0;
        rows.push((t, vec![kw], kw >= 0.0));
    }
    TimeSeries::from_rows(Resolution::Hourly, &[(PV, Unit::Kilowatt)], &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_record_converts_watts() {
        let body = br#"{"inputs":{},"outputs":{"hourly":[{"time":"20050101:1210","P":1250.0,"G(i)":400.1}]}}"#;
        let ts = parse_pvgis_response(body).unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(ts.values(PV).unwrap()[0], 1.25);
        assert_eq!(ts.timestamps()[0], Utc.with_ymd_and_hms(2005, 1, 1, 12, 0, 0).unwrap());
    }

    #[test]
    fn malformed_record_names_field() {
        let body = br#"{"outputs":{"hourly":[{"time":"20050101:0010","P":0.0},{"time":"20050101:0110"}]}}"#;
        match parse_pvgis_response(body) {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "outputs.hourly[1].P"),
            other => panic!("unexpected {other:?}"),
        }
        let body = br#"{"outputs":{"hourly":[{"time":"2005-01-01","P":0.0}]}}"#;
        assert!(matches!(parse_pvgis_response(body), Err(Error::Parse { .. })));
    }

    #[test]
    fn query_uses_pvgis_keys() {
        let site = SiteSpec::new(50.99, 5.54, 33.0, 0.0, 2.5).unwrap();
        let q = pvgis_query(&site, &YearRange::new(2005, 2018).unwrap());
        let get = |k: &str| q.iter().find(|(n, _)| n == k).map(|(_, v)| v.as_str()).unwrap();
        assert_eq!(get("lat"), "50.99");
        assert_eq!(get("loss"), "14");
        assert_eq!(get("angle"), "33");
        assert_eq!(get("aspect"), "0");
        assert_eq!(get("pvcalculation"), "1");
        assert_eq!(get("outputformat"), "json");
        assert_eq!(get("startyear"), "2005");
        assert_eq!(get("endyear"), "2018");
    }
}
