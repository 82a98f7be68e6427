//! Data acquisition: the PV system description, the hourly [`TimeSeries`]
//! container, API clients for PVGIS and the Open-Meteo archive, and loaders
//! for observed PV and forecast-weather CSV files.

mod cache;
mod http;
mod loaders;
mod openmeteo;
mod pvgis;
mod site;
mod timeseries;

pub use cache::Cache;
pub use http::{ApiClient, HostLimiter, HttpResponse, Transport, UreqTransport};
pub use loaders::{
    load_pv_csv, load_weather_forecast_csv, parse_timestamp, write_pv_csv, write_weather_forecast_csv, ForecastWeather,
};
pub use openmeteo::{parse_openmeteo_response, OPENMETEO_ARCHIVE_URL};
pub use pvgis::{parse_pvgis_response, PVGIS_SERIESCALC_URL};
pub use site::{SiteSpec, YearRange, PVGIS_FIRST_YEAR};
pub use timeseries::{Channel, Resolution, TimeSeries, Unit, DIFFUSE, DIRECT, HUMIDITY, PV, WEATHER_CHANNELS};
