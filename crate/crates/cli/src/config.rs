//! Run configuration: one TOML file plus `--set key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use solnet::eval::ExperimentConfig;
use solnet::series::YearMonth;
use solnet::synthgen::ClearnessParams;
use solnet::{Error, Result, SiteSpec, YearRange};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed. Overrides `experiment.seed`; every derived seed is a hash of it.
    #[serde(default)]
    pub seed: u64,
    /// Every file a command writes goes here.
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses all cores.
    #[serde(default)]
    pub threads: usize,
    pub site: SiteSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub source: SourceSection,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub synth: SynthSection,
}

/// The target installation. Azimuth uses the PVGIS aspect convention:
/// south 0, east negative, west positive.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteSection {
    pub id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub tilt: f64,
    pub azimuth: f64,
    pub peak_power: f64,
    #[serde(default = "default_loss")]
    pub loss_fraction: f64,
}

fn default_loss() -> f64 {
    0.14
}

impl SiteSection {
    pub fn spec(&self) -> Result<SiteSpec> {
        SiteSpec::new(self.latitude, self.longitude, self.tilt, self.azimuth, self.peak_power)?
            .with_loss_fraction(self.loss_fraction)
    }
}

/// Input files. Which ones are needed depends on the command.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Observed PV of the target site.
    pub target_csv: Option<PathBuf>,
    /// Weather forecasts covering `target_csv` (and `test_csv`), for multivariate runs.
    pub weather_csv: Option<PathBuf>,
    /// Held-out PV for `evaluate`. Without it, the test span of `target_csv` is used.
    pub test_csv: Option<PathBuf>,
    /// Recent PV ending at 23:00 UTC, for `forecast`.
    pub history_csv: Option<PathBuf>,
    /// Weather forecast for the forecast day.
    pub forecast_weather_csv: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Pvgis,
    #[default]
    Synthetic,
}

/// Where source-domain training data comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    pub kind: SourceKind,
    pub start_year: i32,
    pub end_year: i32,
    /// Synthetic weather seed; ignored for PVGIS.
    pub climate_seed: u64,
    pub clearness: ClearnessParams,
}

impl Default for SourceSection {
    fn default() -> Self {
        SourceSection {
            kind: SourceKind::Synthetic,
            start_year: 2015,
            end_year: 2017,
            climate_seed: 1,
            clearness: ClearnessParams::default(),
        }
    }
}

impl SourceSection {
    pub fn years(&self) -> Result<YearRange> {
        YearRange::new(self.start_year, self.end_year)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    /// Months of target data for the learning curve and misspecification runs.
    pub months: Vec<u32>,
    /// Columns of the seasonality grid.
    pub terminal_months: Vec<YearMonth>,
    /// Rows 0..=max_months of the seasonality grid.
    pub max_months: u32,
    /// Add transfer rows to the seasonality grid.
    pub with_transfer: bool,
    pub offsets_km: Vec<f64>,
    /// Compass bearing along which the source site is moved.
    pub bearing_deg: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            months: (0..=12).collect(),
            terminal_months: Vec::new(),
            max_months: 12,
            with_transfer: false,
            offsets_km: vec![0.0, 50.0, 100.0, 200.0, 400.0, 800.0],
            bearing_deg: 125.0,
        }
    }
}

/// World written by the `synth` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub climate_seed: u64,
    pub start_year: i32,
    pub end_year: i32,
    pub clearness: ClearnessParams,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            climate_seed: 2,
            start_year: 2018,
            end_year: 2019,
            clearness: ClearnessParams::default(),
        }
    }
}

/// Applies `a.b.c=value` to a TOML table. Values are parsed as TOML and fall
/// back to a bare string, so `--set site.id=nl-01` needs no quoting.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let (last, parents) = path.split_last().unwrap();
    let mut node = table;
    for p in parents {
        let entry = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{p}` in `{key}` is not a table")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Reads `path` (if any), applies overrides and validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(format!("reading {}", p.display()), e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.experiment.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.site.id.is_empty() {
            return Err(Error::Config("site.id must not be empty".into()));
        }
        self.site.spec()?;
        self.source.years()?;
        if self.synth.start_year > self.synth.end_year {
            return Err(Error::Config("synth.start_year is after synth.end_year".into()));
        }
        if !(0.0..360.0).contains(&self.grid.bearing_deg) {
            return Err(Error::Config(format!(
                "grid.bearing_deg out of range: {}",
                self.grid.bearing_deg
            )));
        }
        if self.grid.offsets_km.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::Config("grid.offsets_km must be non-negative".into()));
        }
        self.experiment.validate()
    }

    /// The resolved configuration, loadable again with `--config`.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}
