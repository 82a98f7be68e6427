use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First year with PVGIS hourly data.
pub const PVGIS_FIRST_YEAR: i32 = 2005;

fn default_loss_fraction() -> f64 {
    0.14
}

/// Physical description of a PV installation.
///
/// `azimuth` follows the PVGIS "aspect" convention: 0 is due south, east is
/// negative, west positive. Convert compass bearings before building a site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteSpec {
    pub latitude: f64,
    pub longitude: f64,
    pub tilt: f64,
    pub azimuth: f64,
    /// Nominal DC capacity in kWp.
    pub peak_power: f64,
    #[serde(default = "default_loss_fraction")]
    pub loss_fraction: f64,
}

impl SiteSpec {
    pub fn new(latitude: f64, longitude: f64, tilt: f64, azimuth: f64, peak_power: f64) -> Result<Self> {
        let site = SiteSpec {
            latitude,
            longitude,
            tilt,
            azimuth,
            peak_power,
            loss_fraction: default_loss_fraction(),
        };
        site.validate()?;
        Ok(site)
    }

    pub fn with_loss_fraction(mut self, loss_fraction: f64) -> Result<Self> {
        self.loss_fraction = loss_fraction;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str, v: f64| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} out of range: {v}")))
            }
        };
        check((-90.0..=90.0).contains(&self.latitude), "latitude", self.latitude)?;
        check((-180.0..=180.0).contains(&self.longitude), "longitude", self.longitude)?;
        check((0.0..=90.0).contains(&self.tilt), "tilt", self.tilt)?;
        check((-180.0..=180.0).contains(&self.azimuth), "azimuth", self.azimuth)?;
        check(
            self.peak_power.is_finite() && self.peak_power > 0.0,
            "peak_power",
            self.peak_power,
        )?;
        check(
            (0.0..1.0).contains(&self.loss_fraction),
            "loss_fraction",
            self.loss_fraction,
        )?;
        Ok(())
    }

    /// Converts a compass azimuth (0 = north, clockwise) to the PVGIS aspect.
    pub fn aspect_from_compass(compass: f64) -> f64 {
        let a = (compass - 180.0).rem_euclid(360.0);
        if a > 180.0 {
            a - 360.0
        } else {
            a
        }
    }

    /// The same installation moved to another location.
    pub fn relocated(&self, latitude: f64, longitude: f64) -> Result<Self> {
        let moved = SiteSpec {
            latitude,
            longitude,
            ..*self
        };
        moved.validate()?;
        Ok(moved)
    }
}

/// Inclusive range of calendar years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YearRange {
    pub start_year: i32,
    pub end_year: i32,
}

impl YearRange {
    pub fn new(start_year: i32, end_year: i32) -> Result<Self> {
        if start_year > end_year {
            return Err(Error::Precondition(format!(
                "year range start {start_year} is after end {end_year}"
            )));
        }
        Ok(YearRange { start_year, end_year })
    }

    pub fn single(year: i32) -> Self {
        YearRange {
            start_year: year,
            end_year: year,
        }
    }

    pub fn len(&self) -> usize {
        (self.end_year - self.start_year + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.start_year..=self.end_year
    }

    /// Leakage guard: a source range must end before the evaluation period starts.
    pub fn ensure_precedes(&self, evaluation: &YearRange) -> Result<()> {
        if self.end_year >= evaluation.start_year {
            return Err(Error::Leakage {
                source_start: self.start_year,
                source_end: self.end_year,
                eval_start: evaluation.start_year,
                eval_end: evaluation.end_year,
            });
        }
        Ok(())
    }
}
