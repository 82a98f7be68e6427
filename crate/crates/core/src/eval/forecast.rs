use chrono::{DateTime, Duration, Utc};

use super::experiment::evaluate_windows;
use super::metrics::{compute_metrics, naive_seasonal_forecast, MetricsReport};
use crate::error::{Error, Result};
use crate::ingest::{Resolution, TimeSeries, Unit, PV, WEATHER_CHANNELS};
use crate::net::{predict, Checkpoint};
use crate::series::{apply_scaler, build_windows, day_floor, WindowConfig, WindowSample};

/// Hourly PV forecast for the day after the supplied history.
#[derive(Debug, Clone, PartialEq)]
pub struct DayAheadForecast {
    pub times: Vec<DateTime<Utc>>,
    /// Inverse-scaled and clamped at zero.
    pub power_kw: Vec<f64>,
}

/// Pooled scores of a checkpoint and of persistence over the same days.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointScore {
    pub model: MetricsReport,
    pub naive: MetricsReport,
    pub days: usize,
    /// Days without a complete previous day, skipped for both.
    pub skipped_days: usize,
}

fn uses_weather(ckpt: &Checkpoint) -> Result<bool> {
    let plain = WindowConfig::default().features(0);
    match ckpt.config.input_features {
        f if f == plain => Ok(false),
        f if f == plain + WEATHER_CHANNELS.len() => Ok(true),
        f => Err(Error::Config(format!(
            "checkpoint expects {f} input features, which no input layout provides"
        ))),
    }
}

fn window_config(ckpt: &Checkpoint, utc_offset_hours: i32) -> WindowConfig {
    WindowConfig {
        lags: ckpt.config.lags,
        horizon: ckpt.config.horizon,
        stride_hours: 24,
        utc_offset_hours,
    }
}

fn scaled_covariates(ckpt: &Checkpoint, weather: Option<&TimeSeries>) -> Result<Option<TimeSeries>> {
    if !uses_weather(ckpt)? {
        return Ok(None);
    }
    let weather = weather.ok_or_else(|| Error::Precondition("this checkpoint needs a weather forecast".into()))?;
    Ok(Some(apply_scaler(&weather.select(&WEATHER_CHANNELS)?, &ckpt.scaler)?))
}

/// Forecasts the `horizon` hours that follow `history`.
///
/// `history` must be hourly and end at 23:00 UTC so the forecast starts at
/// midnight; its last `lags` hours must all be present. Checkpoints trained
/// with weather covariates also need `weather` for the forecast hours.
pub fn forecast_day_ahead(
    ckpt: &Checkpoint,
    history: &TimeSeries,
    weather: Option<&TimeSeries>,
    utc_offset_hours: i32,
) -> Result<DayAheadForecast> {
    if history.resolution() != Resolution::Hourly {
        return Err(Error::InvalidSeries("forecast history must be hourly".into()));
    }
    let origin = history
        .end()
        .ok_or_else(|| Error::InsufficientData("empty forecast history".into()))?;
    if day_floor(origin) != origin {
        return Err(Error::Precondition(format!(
            "history must end at 23:00 UTC, last hour is {}",
            (origin - Duration::hours(1)).format("%Y-%m-%dT%H:%MZ")
        )));
    }
    let cfg = window_config(ckpt, utc_offset_hours);
    let recent = history.slice_time(origin - Duration::hours(cfg.lags as i64), origin);
    if recent.len() != cfg.lags || recent.valid_count() != cfg.lags {
        return Err(Error::InsufficientData(format!(
            "forecasting needs the last {} hours of PV without gaps",
            cfg.lags
        )));
    }
    let pv = recent
        .values(PV)
        .ok_or_else(|| Error::InvalidSeries("history has no PV channel".into()))?;
    // The forecast hours carry placeholder targets so the windowing code
    // yields the sample whose origin is midnight.
    let rows: Vec<_> = recent
        .timestamps()
        .iter()
        .zip(pv)
        .map(|(t, v)| (*t, vec![*v], true))
        .chain((0..cfg.horizon).map(|h| (origin + Duration::hours(h as i64), vec![0.0], true)))
        .collect();
    let extended = TimeSeries::from_rows(Resolution::Hourly, &[(PV, Unit::Kilowatt)], &rows)?;
    let scaled = apply_scaler(&extended, &ckpt.scaler)?;
    let covariates = scaled_covariates(ckpt, weather)?;
    let sample = build_windows(&scaled, covariates.as_ref(), &cfg)?
        .samples
        .into_iter()
        .find(|s| s.origin() == origin)
        .ok_or_else(|| Error::InsufficientData("weather forecast does not cover the forecast hours".into()))?;
    let scale = ckpt.scaler.get(PV).ok_or_else(|| Error::UnfittedChannel(PV.into()))?;
    let power_kw = predict(&ckpt.params, &ckpt.config, &sample)?
        .into_iter()
        .map(|y| scale.invert(y).max(0.0))
        .collect();
    Ok(DayAheadForecast {
        times: sample.target_times,
        power_kw,
    })
}

/// Scores a checkpoint on every complete day of `series` that also has a
/// complete previous day, using the checkpoint's own scaler.
pub fn evaluate_checkpoint(ckpt: &Checkpoint, series: &TimeSeries, utc_offset_hours: i32) -> Result<CheckpointScore> {
    let pv = series.select(&[PV])?;
    let scaled = apply_scaler(&pv, &ckpt.scaler)?;
    let covariates = scaled_covariates(ckpt, Some(series))?;
    let windows = build_windows(&scaled, covariates.as_ref(), &window_config(ckpt, utc_offset_hours))?.samples;
    let mut kept: Vec<WindowSample> = Vec::with_capacity(windows.len());
    let mut naive_pred = Vec::new();
    let mut actual = Vec::new();
    for w in &windows {
        match naive_seasonal_forecast(&scaled, w.forecast_date) {
            Ok(p) => {
                naive_pred.extend(p.into_iter().take(w.target.len()));
                actual.extend_from_slice(&w.target);
                kept.push(w.clone());
            }
            Err(Error::MissingHour(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if kept.is_empty() {
        return Err(Error::InsufficientData("no complete days to evaluate".into()));
    }
    Ok(CheckpointScore {
        model: evaluate_windows(&ckpt.params, &ckpt.config, &kept)?,
        naive: compute_metrics(&naive_pred, &actual)?,
        days: kept.len(),
        skipped_days: windows.len() - kept.len(),
    })
}
