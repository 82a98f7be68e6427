use std::io::{Read, Write};

use chrono::{DateTime, Duration, NaiveDate, Timelike, Utc};
use serde::{Deserialize, Serialize};

use super::calendar::day_floor;
use crate::error::{Error, Result};
use crate::ingest::{TimeSeries, PV};

/// `(sin, cos)` of the local hour of day for each timestamp. Local time is
/// UTC shifted by a fixed offset; no daylight-saving adjustment.
pub fn encode_hour_cyclical(timestamps: &[DateTime<Utc>], utc_offset_hours: i32) -> (Vec<f64>, Vec<f64>) {
    timestamps
        .iter()
        .map(|t| {
            let h = (t.hour() as i32 + utc_offset_hours).rem_euclid(24) as f64;
            (std::f64::consts::TAU * h / 24.0).sin_cos()
        })
        .unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    /// Hours of PV history per sample.
    pub lags: usize,
    /// Hours forecast per sample.
    pub horizon: usize,
    /// Hours between consecutive forecast origins.
    pub stride_hours: usize,
    /// Offset from UTC used for the hour-of-day features.
    pub utc_offset_hours: i32,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            lags: 24,
            horizon: 24,
            stride_hours: 24,
            utc_offset_hours: 0,
        }
    }
}

impl WindowConfig {
    pub fn features(&self, covariates: usize) -> usize {
        3 + covariates
    }
}

/// One forecast problem: `lags` feature vectors in, `horizon` PV values out.
///
/// Step `i` holds `[pv, sin_hour, cos_hour, cov_1 .. cov_k]`, where the
/// covariates are the weather for forecast hour `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    /// Row-major `lags x features`.
    pub inputs: Vec<f64>,
    pub features: usize,
    pub target: Vec<f64>,
    pub forecast_date: NaiveDate,
    pub input_times: Vec<DateTime<Utc>>,
    pub target_times: Vec<DateTime<Utc>>,
}

impl WindowSample {
    pub fn steps(&self) -> usize {
        self.inputs.len() / self.features
    }

    pub fn step(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.features..(i + 1) * self.features]
    }

    /// The PV history, one value per lag.
    pub fn pv_lags(&self) -> Vec<f64> {
        (0..self.steps()).map(|i| self.step(i)[0]).collect()
    }

    pub fn origin(&self) -> DateTime<Utc> {
        self.target_times[0]
    }
}

#[derive(Debug, Clone, Default)]
pub struct WindowSet {
    pub samples: Vec<WindowSample>,
    /// Candidate samples discarded because they touched a masked point.
    pub dropped: usize,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Splits into samples whose forecast starts before `boundary` and the rest.
    pub fn split_at(self, boundary: DateTime<Utc>) -> (WindowSet, WindowSet) {
        let (a, b): (Vec<_>, Vec<_>) = self.samples.into_iter().partition(|s| s.origin() < boundary);
        (
            WindowSet { samples: a, dropped: 0 },
            WindowSet { samples: b, dropped: 0 },
        )
    }
}

/// Cuts a scaled, hourly PV series (and optional scaled weather covariates)
/// into forecast samples.
///
/// Forecast origins start at the first midnight with `lags` hours of history
/// and advance by `stride_hours`. Inputs are the `lags` hours preceding the
/// origin; targets are the `horizon` hours from the origin. Samples with any
/// masked PV or covariate hour are dropped and counted.
pub fn build_windows(pv: &TimeSeries, covariates: Option<&TimeSeries>, cfg: &WindowConfig) -> Result<WindowSet> {
    if cfg.lags == 0 || cfg.horizon == 0 || cfg.stride_hours == 0 {
        return Err(Error::Config("lags, horizon and stride must be positive".into()));
    }
    let values = pv
        .values(PV)
        .ok_or_else(|| Error::InvalidSeries("PV channel missing".into()))?;
    let need = cfg.lags + cfg.horizon;
    if pv.len() < need {
        return Err(Error::InsufficientData(format!(
            "series has {} hours, windowing needs at least {need}",
            pv.len()
        )));
    }
    if let Some(cov) = covariates {
        if cfg.lags != cfg.horizon {
            return Err(Error::Config(
                "positional weather covariates need lags == horizon".into(),
            ));
        }
        if cov.resolution() != pv.resolution() {
            return Err(Error::InvalidSeries("covariates must share the PV resolution".into()));
        }
    }
    let n_cov = covariates.map_or(0, |c| c.channels().len());
    let features = cfg.features(n_cov);
    let start = pv.start().unwrap();
    let times = pv.timestamps();
    let (sin, cos) = encode_hour_cyclical(times, cfg.utc_offset_hours);

    let earliest = start + Duration::hours(cfg.lags as i64);
    let mut origin = day_floor(earliest);
    if origin < earliest {
        origin += Duration::days(1);
    }
    let mut out = WindowSet::default();
    loop {
        let o = (origin - start).num_hours() as usize;
        if o + cfg.horizon > pv.len() {
            break;
        }
        origin += Duration::hours(cfg.stride_hours as i64);
        let (lo, hi) = (o - cfg.lags, o + cfg.horizon);
        if !pv.valid()[lo..hi].iter().all(|v| *v) {
            out.dropped += 1;
            continue;
        }
        let cov_rows = match covariates {
            None => Some(Vec::new()),
            Some(cov) => (o..hi)
                .map(|i| cov.index_of(times[i]).filter(|j| cov.valid()[*j]))
                .collect::<Option<Vec<usize>>>(),
        };
        let Some(cov_rows) = cov_rows else {
            out.dropped += 1;
            continue;
        };
        let mut inputs = Vec::with_capacity(cfg.lags * features);
        for (step, i) in (lo..o).enumerate() {
            inputs.extend([values[i], sin[i], cos[i]]);
            if let Some(cov) = covariates {
                let j = cov_rows[step];
                inputs.extend(cov.channels().iter().map(|c| c.values[j]));
            }
        }
        out.samples.push(WindowSample {
            inputs,
            features,
            target: values[o..hi].to_vec(),
            forecast_date: times[o].date_naive(),
            input_times: times[lo..o].to_vec(),
            target_times: times[o..hi].to_vec(),
        });
    }
    Ok(out)
}

const WINDOW_MAGIC: &[u8; 8] = b"SNWINDOW";
const WINDOW_VERSION: u32 = 1;

/// Writes samples in a little-endian binary container:
/// magic, version (u32), count (u64), lags, horizon, features (u32 each),
/// then per sample the first input and first target instant (i64 Unix
/// seconds), inputs and targets (f64).
pub fn write_windows<W: Write>(set: &WindowSet, mut w: W) -> Result<()> {
    let io = |e| Error::io("writing window container", e);
    let (lags, horizon, features) = set
        .samples
        .first()
        .map_or((0, 0, 0), |s| (s.steps(), s.target.len(), s.features));
    w.write_all(WINDOW_MAGIC).map_err(io)?;
    w.write_all(&WINDOW_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(set.samples.len() as u64).to_le_bytes()).map_err(io)?;
    for v in [lags, horizon, features] {
        w.write_all(&(v as u32).to_le_bytes()).map_err(io)?;
    }
    for s in &set.samples {
        if s.steps() != lags || s.target.len() != horizon || s.features != features {
            return Err(Error::Shape("window container requires uniform sample shapes".into()));
        }
        w.write_all(&s.input_times[0].timestamp().to_le_bytes()).map_err(io)?;
        w.write_all(&s.target_times[0].timestamp().to_le_bytes()).map_err(io)?;
        for v in s.inputs.iter().chain(&s.target) {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    Ok(())
}

pub fn read_windows<R: Read>(mut r: R) -> Result<WindowSet> {
    fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        r.read_exact(&mut b)
            .map_err(|e| Error::io("reading window container", e))?;
        Ok(b)
    }
    if &take::<8, _>(&mut r)? != WINDOW_MAGIC {
        return Err(Error::InvalidSeries("not a window container".into()));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != WINDOW_VERSION {
        return Err(Error::InvalidSeries(format!(
            "unsupported window container version {version}"
        )));
    }
    let count = u64::from_le_bytes(take(&mut r)?) as usize;
    let lags = u32::from_le_bytes(take(&mut r)?) as usize;
    let horizon = u32::from_le_bytes(take(&mut r)?) as usize;
    let features = u32::from_le_bytes(take(&mut r)?) as usize;
    let hourly = |t0: i64, n: usize| -> Result<Vec<DateTime<Utc>>> {
        let t0 = DateTime::from_timestamp(t0, 0).ok_or_else(|| Error::InvalidSeries("bad timestamp".into()))?;
        Ok((0..n).map(|i| t0 + Duration::hours(i as i64)).collect())
    };
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let t_in = i64::from_le_bytes(take(&mut r)?);
        let t_out = i64::from_le_bytes(take(&mut r)?);
        let mut read_vec =
            |n: usize| -> Result<Vec<f64>> { (0..n).map(|_| Ok(f64::from_le_bytes(take(&mut r)?))).collect() };
        let inputs = read_vec(lags * features)?;
        let target = read_vec(horizon)?;
        let target_times = hourly(t_out, horizon)?;
        samples.push(WindowSample {
            inputs,
            features,
            target,
            forecast_date: target_times[0].date_naive(),
            input_times: hourly(t_in, lags)?,
            target_times,
        });
    }
    Ok(WindowSet { samples, dropped: 0 })
}
