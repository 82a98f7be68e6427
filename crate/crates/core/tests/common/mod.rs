#![allow(dead_code)]

use chrono::{DateTime, TimeZone, Utc};
use solnet::eval::{ExperimentConfig, TargetSite};
use solnet::net::ModelConfig;
use solnet::synthgen::{generate_weather_scenario, ClearnessParams, WorldSpec};
use solnet::train::TrainConfig;
use solnet::{SiteSpec, TimeSeries, YearRange};

pub fn utc(y: i32, m: u32, d: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).unwrap()
}

/// South-facing 2.5 kWp rooftop in the Netherlands.
pub fn site() -> SiteSpec {
    SiteSpec::new(52.0, 5.0, 35.0, 0.0, 2.5).unwrap()
}

pub fn world(site: SiteSpec, seed: u64, start_year: i32, end_year: i32) -> WorldSpec {
    WorldSpec {
        site,
        climate_seed: seed,
        clearness: ClearnessParams::default(),
        years: YearRange::new(start_year, end_year).unwrap(),
    }
}

pub fn series(world: &WorldSpec, from: DateTime<Utc>, to: DateTime<Utc>) -> TimeSeries {
    generate_weather_scenario(world).unwrap().slice_time(from, to)
}

pub fn target(id: &str, world: &WorldSpec, from: DateTime<Utc>, to: DateTime<Utc>) -> TargetSite {
    TargetSite {
        id: id.into(),
        site: world.site,
        series: series(world, from, to),
    }
}

/// Small univariate model and training budgets that run in seconds.
pub fn desk_config(hidden: usize) -> ExperimentConfig {
    let source = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 32,
        max_epochs: 30,
        patience: 5,
        ..TrainConfig::default()
    };
    ExperimentConfig {
        model: ModelConfig {
            num_layers: 1,
            hidden_units: hidden,
            dropout_rate: 0.1,
            ..ModelConfig::default()
        },
        source_training: source,
        // a month of data is only ~30 windows, so target runs take small
        // batches and many epochs
        target_training: TrainConfig {
            batch_size: 8,
            max_epochs: 200,
            patience: 20,
            ..source
        },
        finetune_training: TrainConfig {
            max_epochs: 30,
            patience: 5,
            ..TrainConfig::finetune_from(&source)
        },
        seed: 7,
        ..ExperimentConfig::default()
    }
}
