//! Deterministic synthetic PV and weather.
//!
//! Clear-sky output comes from textbook solar geometry (Cooper declination,
//! hour angle from longitude, no equation of time) and a plane-of-array
//! incidence term. Beam irradiance follows the Meinel air-mass model,
//! `1.353 * 0.7^(AM^0.678)` kW/m2 with the plain `1 / sin(elevation)` air
//! mass, and power is rated against 1 kW/m2. A clamped AR(1) clearness index
//! then modulates PV and drives the weather channels, so series generated with
//! different climate seeds share an envelope but differ day to day.
//!
//! Every value is evaluated at its timestamp instant.

use std::path::Path;

use chrono::{DateTime, Datelike, Duration, TimeZone, Timelike, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    write_pv_csv, write_weather_forecast_csv, Channel, Resolution, SiteSpec, TimeSeries, Unit, YearRange, DIFFUSE,
    DIRECT, HUMIDITY, PV,
};

const SOLAR_CONSTANT: f64 = 1.353;
const TRANSMITTANCE: f64 = 0.7;
const AIRMASS_EXPONENT: f64 = 0.678;
/// Rating irradiance, W/m2.
const IRRADIANCE_SCALE: f64 = 1000.0;
/// Diffuse radiation at full overcast in daylight, W/m2.
const DIFFUSE_SCALE: f64 = 150.0;
pub const CLEARNESS_MIN: f64 = 0.2;
pub const CLEARNESS_MAX: f64 = 1.0;

/// Hourly AR(1) clearness process:
/// `k_t = mean + persistence * (k_{t-1} - mean) + noise * N(0, 1)`,
/// clamped to `[0.2, 1.0]` and started at `mean`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClearnessParams {
    pub mean: f64,
    pub persistence: f64,
    pub noise: f64,
}

impl Default for ClearnessParams {
    fn default() -> Self {
        ClearnessParams {
            mean: 0.7,
            persistence: 0.97,
            noise: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub site: SiteSpec,
    pub climate_seed: u64,
    #[serde(default)]
    pub clearness: ClearnessParams,
    pub years: YearRange,
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        self.site.validate()?;
        let c = &self.clearness;
        if !(CLEARNESS_MIN..=CLEARNESS_MAX).contains(&c.mean) {
            return Err(Error::Config(format!("clearness mean {} outside [0.2, 1]", c.mean)));
        }
        if !(0.0..1.0).contains(&c.persistence) || !(c.noise.is_finite() && c.noise >= 0.0) {
            return Err(Error::Config(
                "clearness persistence must be in [0, 1) and noise non-negative".into(),
            ));
        }
        Ok(())
    }

    /// First instant of the first year.
    pub fn start(&self) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(self.years.start_year, 1, 1, 0, 0, 0).unwrap()
    }

    /// First instant after the last year.
    pub fn end(&self) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(self.years.end_year + 1, 1, 1, 0, 0, 0).unwrap()
    }
}

/// Solar elevation sine and plane-of-array incidence cosine at `t`.
pub fn solar_geometry(site: &SiteSpec, t: DateTime<Utc>) -> (f64, f64) {
    let day = t.ordinal() as f64;
    let decl = (23.45f64).to_radians() * ((360.0 * (284.0 + day) / 365.0).to_radians()).sin();
    let utc_hours = t.hour() as f64 + t.minute() as f64 / 60.0 + t.second() as f64 / 3600.0;
    let solar_time = utc_hours + site.longitude / 15.0;
    let omega = (15.0 * (solar_time - 12.0)).to_radians();
    let phi = site.latitude.to_radians();
    let beta = site.tilt.to_radians();
    let gamma = site.azimuth.to_radians();

    let sin_elev = phi.sin() * decl.sin() + phi.cos() * decl.cos() * omega.cos();
    let cos_inc = decl.sin() * phi.sin() * beta.cos() - decl.sin() * phi.cos() * beta.sin() * gamma.cos()
        + decl.cos() * phi.cos() * beta.cos() * omega.cos()
        + decl.cos() * phi.sin() * beta.sin() * gamma.cos() * omega.cos()
        + decl.cos() * beta.sin() * gamma.sin() * omega.sin();
    (sin_elev, cos_inc)
}

/// Clear-sky beam irradiance in kW/m2 for a given elevation sine (zero below
/// the horizon). Never exceeds 1.
pub fn beam_irradiance(sin_elev: f64) -> f64 {
    if sin_elev <= 0.0 {
        return 0.0;
    }
    let airmass = 1.0 / sin_elev;
    SOLAR_CONSTANT * TRANSMITTANCE.powf(airmass.powf(AIRMASS_EXPONENT))
}

/// Clear-sky AC power in kW at `t`.
pub fn clear_sky_power(site: &SiteSpec, t: DateTime<Utc>) -> f64 {
    let (sin_elev, cos_inc) = solar_geometry(site, t);
    if sin_elev <= 0.0 {
        return 0.0;
    }
    site.peak_power * (1.0 - site.loss_fraction) * cos_inc.max(0.0) * beam_irradiance(sin_elev)
}

/// Clear-sky PV at each timestamp, as an hourly series.
pub fn generate_clear_sky_pv(site: &SiteSpec, timestamps: &[DateTime<Utc>]) -> Result<TimeSeries> {
    site.validate()?;
    let values = timestamps.iter().map(|t| clear_sky_power(site, *t)).collect();
    TimeSeries::new(
        Resolution::Hourly,
        timestamps.to_vec(),
        vec![Channel::new(PV, Unit::Kilowatt, values)],
        vec![true; timestamps.len()],
    )
}

/// Hourly timestamps in `[start, end)`.
pub fn hourly_range(start: DateTime<Utc>, end: DateTime<Utc>) -> Vec<DateTime<Utc>> {
    let n = (end - start).num_hours().max(0);
    (0..n).map(|h| start + Duration::hours(h)).collect()
}

/// Seeded clearness realization of length `n`.
pub fn clearness_series(params: &ClearnessParams, seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k = params.mean;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let eps: f64 = StandardNormal.sample(&mut rng);
        k = (params.mean + params.persistence * (k - params.mean) + params.noise * eps)
            .clamp(CLEARNESS_MIN, CLEARNESS_MAX);
        out.push(k);
    }
    out
}

/// PV, relative humidity, direct and diffuse radiation over the world's
/// years.
pub fn generate_weather_scenario(world: &WorldSpec) -> Result<TimeSeries> {
    world.validate()?;
    let times = hourly_range(world.start(), world.end());
    let k = clearness_series(&world.clearness, world.climate_seed, times.len());
    let n = times.len();
    let (mut pv, mut hum, mut direct, mut diffuse) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for (t, k) in times.iter().zip(&k) {
        let (sin_elev, _) = solar_geometry(&world.site, *t);
        let daylight = if sin_elev > 0.0 { 1.0 } else { 0.0 };
        pv.push(clear_sky_power(&world.site, *t) * k);
        hum.push(100.0 - 80.0 * k);
        direct.push(IRRADIANCE_SCALE * sin_elev.max(0.0) * beam_irradiance(sin_elev) * k);
        diffuse.push(DIFFUSE_SCALE * (1.0 - k) * daylight);
    }
    TimeSeries::new(
        Resolution::Hourly,
        times,
        vec![
            Channel::new(PV, Unit::Kilowatt, pv),
            Channel::new(HUMIDITY, Unit::Percent, hum),
            Channel::new(DIRECT, Unit::WattsPerSquareMeter, direct),
            Channel::new(DIFFUSE, Unit::WattsPerSquareMeter, diffuse),
        ],
        vec![true; n],
    )
}

/// Write `pv.csv` and `weather.csv` for a world into `dir`, in the schemas
/// the ingest loaders read.
pub fn write_world_csvs(world: &WorldSpec, dir: &Path) -> Result<TimeSeries> {
    let ts = generate_weather_scenario(world)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    write_pv_csv(&ts, dir.join("pv.csv"))?;
    write_weather_forecast_csv(&ts, dir.join("weather.csv"))?;
    Ok(ts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world(seed: u64) -> WorldSpec {
        WorldSpec {
            site: SiteSpec::new(52.0, 5.0, 35.0, 0.0, 2.5).unwrap(),
            climate_seed: seed,
            clearness: ClearnessParams::default(),
            years: YearRange::single(2019),
        }
    }

    #[test]
    fn night_is_zero() {
        let site = SiteSpec::new(52.0, 5.0, 35.0, 0.0, 2.5).unwrap();
        // local solar midnight is about 23:40 UTC at 5 E
        for d in [1, 100, 200, 300] {
            let t = Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap() + Duration::days(d);
            assert_eq!(clear_sky_power(&site, t), 0.0);
        }
    }

    #[test]
    fn equator_equinox_noon() {
        let site = SiteSpec::new(0.0, 0.0, 0.0, 0.0, 2.5).unwrap();
        let t = Utc.with_ymd_and_hms(2019, 3, 21, 12, 0, 0).unwrap();
        let expect = 2.5 * 0.86 * 1.353 * 0.7;
        assert!((clear_sky_power(&site, t) - expect).abs() / expect < 1e-4);
    }

    #[test]
    fn bounded_by_derated_peak() {
        let w = world(1);
        let ts = generate_weather_scenario(&w).unwrap();
        let cs = generate_clear_sky_pv(&w.site, ts.timestamps()).unwrap();
        let bound = 2.5 * 0.86;
        for ((pv, c), t) in ts
            .values(PV)
            .unwrap()
            .iter()
            .zip(cs.values(PV).unwrap())
            .zip(ts.timestamps())
        {
            assert!(*pv >= 0.0 && *pv <= *c + 1e-15 && *c <= bound);
            if solar_geometry(&w.site, *t).0 <= 0.0 {
                assert_eq!(*pv, 0.0);
            }
        }
        for h in ts.values(HUMIDITY).unwrap() {
            assert!((20.0..=100.0).contains(h));
        }
        for name in [DIRECT, DIFFUSE] {
            assert!(ts.values(name).unwrap().iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_weather_scenario(&world(4)).unwrap();
        let b = generate_weather_scenario(&world(4)).unwrap();
        let c = generate_weather_scenario(&world(5)).unwrap();
        let bits = |t: &TimeSeries| t.values(PV).unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(a.values(PV), c.values(PV));
        assert_eq!(a.timestamps(), c.timestamps());
    }

    #[test]
    fn full_clearness_is_clear_sky() {
        let mut w = world(2);
        w.clearness = ClearnessParams {
            mean: 1.0,
            persistence: 0.5,
            noise: 0.0,
        };
        let ts = generate_weather_scenario(&w).unwrap();
        let cs = generate_clear_sky_pv(&w.site, ts.timestamps()).unwrap();
        assert_eq!(ts.values(PV), cs.values(PV));
    }

    #[test]
    fn clearness_stays_clamped() {
        let p = ClearnessParams {
            mean: 0.6,
            persistence: 0.5,
            noise: 1.0,
        };
        let k = clearness_series(&p, 3, 10_000);
        assert!(k.iter().all(|v| (0.2..=1.0).contains(v)));
        assert!(k.contains(&0.2) && k.contains(&1.0));
    }

    #[test]
    fn leap_year_length() {
        let mut w = world(0);
        w.years = YearRange::single(2020);
        assert_eq!(generate_weather_scenario(&w).unwrap().len(), 8784);
    }
}
