use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{TimeSeries, PV};

/// Error metrics over pooled forecast values. `mbe` is mean(prediction -
/// actual), so a positive value means over-forecasting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse: f64,
    pub mae: f64,
    pub mbe: f64,
    pub n: usize,
}

pub fn compute_metrics(pred: &[f64], actual: &[f64]) -> Result<MetricsReport> {
    if pred.len() != actual.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} observations",
            pred.len(),
            actual.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InsufficientData("no values to score".into()));
    }
    let n = pred.len() as f64;
    let (mut sq, mut abs, mut bias) = (0.0, 0.0, 0.0);
    for (p, a) in pred.iter().zip(actual) {
        let e = p - a;
        sq += e * e;
        abs += e.abs();
        bias += e;
    }
    let mbe = bias / n;
    // the ordering rmse >= mae >= |mbe| holds exactly in real arithmetic;
    // the max() only absorbs last-bit rounding when all errors are equal
    let mae = (abs / n).max(mbe.abs());
    let rmse = (sq / n).sqrt().max(mae);
    Ok(MetricsReport {
        rmse,
        mae,
        mbe,
        n: pred.len(),
    })
}

/// Percentage change of `model_rmse` relative to `baseline_rmse`; negative
/// means the model beats the baseline.
pub fn skill_score(model_rmse: f64, baseline_rmse: f64) -> Result<f64> {
    if baseline_rmse.is_nan() || baseline_rmse <= 0.0 {
        return Err(Error::Precondition(format!(
            "skill score needs a positive baseline RMSE, got {baseline_rmse}"
        )));
    }
    Ok(100.0 * (model_rmse / baseline_rmse - 1.0))
}

/// Persistence forecast for `day`: each hour repeats the same hour of the
/// previous day. Every one of those 24 hours must be present and valid.
pub fn naive_seasonal_forecast(history: &TimeSeries, day: NaiveDate) -> Result<Vec<f64>> {
    let values = history
        .values(PV)
        .ok_or_else(|| Error::InvalidSeries("series has no PV channel".into()))?;
    let prev = (day - Duration::days(1)).and_hms_opt(0, 0, 0).unwrap().and_utc();
    (0..24)
        .map(|h| {
            let t = prev + Duration::hours(h);
            match history.index_of(t) {
                Some(i) if history.valid()[i] => Ok(values[i]),
                _ => Err(Error::MissingHour(t.format("%Y-%m-%dT%H:%MZ").to_string())),
            }
        })
        .collect()
}

/// Median of the finite values, or `None` when there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    percentile(values, 0.5)
}

/// Linear-interpolated quantile `q` in `[0, 1]` of the finite values.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

#[cfg(test)]
mod tests {
    use chrono::{TimeZone, Utc};

    use super::*;
    use crate::ingest::{Resolution, Unit};

    #[test]
    fn small_example() {
        let m = compute_metrics(&[0.0, 1.0], &[0.0, 0.0]).unwrap();
        assert!((m.rmse - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!((m.mae, m.mbe, m.n), (0.5, 0.5, 2));
        let z = compute_metrics(&[0.3, 0.7], &[0.3, 0.7]).unwrap();
        assert_eq!((z.rmse, z.mae, z.mbe), (0.0, 0.0, 0.0));
        assert!(compute_metrics(&[], &[]).is_err());
        assert!(compute_metrics(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn skill() {
        assert_eq!(skill_score(0.2, 0.2).unwrap(), 0.0);
        assert!((skill_score(0.87, 1.0).unwrap() + 13.0).abs() < 1e-9);
        assert!((skill_score(1.48, 1.0).unwrap() - 48.0).abs() < 1e-9);
        assert!(skill_score(1.0, 0.0).is_err());
    }

    fn days(n: i64, f: impl Fn(i64) -> f64) -> TimeSeries {
        let t0 = Utc.with_ymd_and_hms(2020, 6, 1, 0, 0, 0).unwrap();
        let rows: Vec<_> = (0..n * 24)
            .map(|h| (t0 + Duration::hours(h), vec![f(h)], true))
            .collect();
        TimeSeries::from_rows(Resolution::Hourly, &[(PV, Unit::Kilowatt)], &rows).unwrap()
    }

    #[test]
    fn naive_copies_previous_day() {
        let ts = days(2, |h| if h == 14 { 0.45 } else { 0.1 });
        let f = naive_seasonal_forecast(&ts, NaiveDate::from_ymd_opt(2020, 6, 2).unwrap()).unwrap();
        assert_eq!(f[14], 0.45);
        assert_eq!(f[13], 0.1);
        let c = days(2, |_| 0.3);
        let f = naive_seasonal_forecast(&c, NaiveDate::from_ymd_opt(2020, 6, 2).unwrap()).unwrap();
        assert_eq!(f, vec![0.3; 24]);
    }

    #[test]
    fn naive_reports_missing_hour() {
        let ts = days(2, |_| 1.0);
        let mut valid = ts.valid().to_vec();
        valid[9] = false;
        let ts = ts.with_mask(valid).unwrap();
        let err = naive_seasonal_forecast(&ts, NaiveDate::from_ymd_opt(2020, 6, 2).unwrap()).unwrap_err();
        assert!(err.to_string().contains("2020-06-01T09:00Z"), "{err}");
        assert!(naive_seasonal_forecast(&ts, NaiveDate::from_ymd_opt(2020, 6, 1).unwrap()).is_err());
    }

    #[test]
    fn quantiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), Some(2.5));
        assert_eq!(percentile(&[0.0, 10.0], 0.05), Some(0.5));
        assert_eq!(median(&[f64::NAN]), None);
    }
}
