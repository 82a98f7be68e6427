use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::{Channel, TimeSeries, Unit, PV};

/// Share of nominal DC power a system delivers after typical losses (14%).
pub const PEAK_POWER_FACTOR: f64 = 0.86;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalerMode {
    /// Plain per-channel min-max.
    Source,
    /// PV upper bound lifted to at least `0.86 * peak_power`, so that a few
    /// months of (possibly winter) data do not set the scale.
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelScale {
    pub name: String,
    /// Unit of the unscaled channel.
    pub unit: Unit,
    pub min: f64,
    pub max: f64,
    /// Whether `max` was raised by the peak-power rule.
    pub overridden: bool,
}

impl ChannelScale {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn invert(&self, y: f64) -> f64 {
        y * (self.max - self.min) + self.min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub channels: Vec<ChannelScale>,
}

impl ScalerState {
    pub fn get(&self, name: &str) -> Option<&ChannelScale> {
        self.channels.iter().find(|c| c.name == name)
    }

    /// Hash of the exact bounds, for checking that several evaluations
    /// shared one scaler.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for c in &self.channels {
            h.update(c.name.as_bytes());
            h.update(c.min.to_le_bytes());
            h.update(c.max.to_le_bytes());
            h.update([c.overridden as u8]);
        }
        hex::encode(&h.finalize()[..8])
    }
}

/// Fits per-channel bounds over the valid points of `train`.
pub fn fit_scaler(train: &TimeSeries, mode: ScalerMode, peak_power: f64) -> Result<ScalerState> {
    if mode == ScalerMode::Target && !(peak_power.is_finite() && peak_power > 0.0) {
        return Err(Error::Config(format!("peak power must be positive, got {peak_power}")));
    }
    let mut channels = Vec::with_capacity(train.channels().len());
    for ch in train.channels() {
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for (v, ok) in ch.values.iter().zip(train.valid()) {
            if *ok {
                min = min.min(*v);
                max = max.max(*v);
            }
        }
        if !min.is_finite() {
            return Err(Error::InsufficientData(format!(
                "no valid training values for channel `{}`",
                ch.name
            )));
        }
        let mut overridden = false;
        if mode == ScalerMode::Target && ch.name == PV {
            let floor = peak_power * PEAK_POWER_FACTOR;
            if floor > max {
                max = floor;
                overridden = true;
            }
        }
        if max <= min {
            return Err(Error::ConstantChannel(ch.name.clone()));
        }
        channels.push(ChannelScale {
            name: ch.name.clone(),
            unit: ch.unit,
            min,
            max,
            overridden,
        });
    }
    Ok(ScalerState { channels })
}

fn transform(ts: &TimeSeries, state: &ScalerState, forward: bool) -> Result<TimeSeries> {
    let channels = ts
        .channels()
        .iter()
        .map(|ch| {
            let scale = state
                .get(&ch.name)
                .ok_or_else(|| Error::UnfittedChannel(ch.name.clone()))?;
            let (unit, values) = if forward {
                (Unit::Dimensionless, ch.values.iter().map(|x| scale.apply(*x)).collect())
            } else {
                (scale.unit, ch.values.iter().map(|y| scale.invert(*y)).collect())
            };
            Ok(Channel::new(ch.name.clone(), unit, values))
        })
        .collect::<Result<Vec<_>>>()?;
    let masked: Vec<bool> = (0..ts.len())
        .map(|i| ts.valid()[i] && !(!forward && channels.iter().any(|c| c.name == PV && c.values[i] < 0.0)))
        .collect();
    ts.with_channels(channels)?.with_mask(masked)
}

/// Min-max scales every channel with bounds fitted on training data.
pub fn apply_scaler(ts: &TimeSeries, state: &ScalerState) -> Result<TimeSeries> {
    transform(ts, state, true)
}

/// Maps scaled values back to native units. Points whose PV value lands
/// below zero are masked, since negative power is not a valid observation.
pub fn invert_scaler(ts: &TimeSeries, state: &ScalerState) -> Result<TimeSeries> {
    transform(ts, state, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Resolution;
    use chrono::{Duration, TimeZone, Utc};

    fn pv(values: &[f64]) -> TimeSeries {
        let t0 = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        let rows: Vec<_> = values
            .iter()
            .enumerate()
            .map(|(i, v)| (t0 + Duration::hours(i as i64), vec![*v], true))
            .collect();
        TimeSeries::from_rows(Resolution::Hourly, &[(PV, Unit::Kilowatt)], &rows).unwrap()
    }

    #[test]
    fn source_mode_is_plain_min_max() {
        let s = fit_scaler(&pv(&[0.0, 2.0, 4.0]), ScalerMode::Source, 2.5).unwrap();
        let c = s.get(PV).unwrap();
        assert_eq!((c.min, c.max, c.overridden), (0.0, 4.0, false));
        assert_eq!(c.apply(2.0), 0.5);
        assert_eq!(c.apply(0.0), 0.0);
        assert_eq!(c.apply(4.0), 1.0);
        assert_eq!(c.invert(0.5), 2.0);
    }

    #[test]
    fn target_mode_lifts_max_to_rated_output() {
        let s = fit_scaler(&pv(&[0.0, 1.0, 1.9]), ScalerMode::Target, 2.5).unwrap();
        let c = s.get(PV).unwrap();
        assert_eq!(c.max, 2.5 * 0.86);
        assert!((c.max - 2.15).abs() < 1e-15);
        assert!(c.overridden);

        let s = fit_scaler(&pv(&[0.0, 1.0, 2.4]), ScalerMode::Target, 2.5).unwrap();
        let c = s.get(PV).unwrap();
        assert_eq!(c.max, 2.4);
        assert!(!c.overridden);
    }

    #[test]
    fn constant_channel_is_named() {
        match fit_scaler(&pv(&[1.0, 1.0]), ScalerMode::Source, 2.5) {
            Err(Error::ConstantChannel(name)) => assert_eq!(name, PV),
            other => panic!("unexpected {other:?}"),
        }
        // the override can rescue an all-zero winter night
        assert!(fit_scaler(&pv(&[0.0, 0.0]), ScalerMode::Target, 2.5).is_ok());
    }

    #[test]
    fn unfitted_channel_is_rejected() {
        let state = ScalerState { channels: vec![] };
        assert!(matches!(
            apply_scaler(&pv(&[1.0]), &state),
            Err(Error::UnfittedChannel(_))
        ));
    }

    #[test]
    fn series_round_trip() {
        let raw = pv(&[0.0, 0.3, 1.7, 2.2]);
        let state = fit_scaler(&raw, ScalerMode::Source, 2.5).unwrap();
        let scaled = apply_scaler(&raw, &state).unwrap();
        assert_eq!(scaled.channel(PV).unwrap().unit, Unit::Dimensionless);
        let back = invert_scaler(&scaled, &state).unwrap();
        assert_eq!(back.channel(PV).unwrap().unit, Unit::Kilowatt);
        for (a, b) in raw.values(PV).unwrap().iter().zip(back.values(PV).unwrap()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
