use chrono::{DateTime, Duration, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::geo::destination_point;
use super::metrics::{compute_metrics, naive_seasonal_forecast, MetricsReport};
use super::report::{CellStatus, ExperimentKind, ExperimentReport, ModelKind, ReportRow};
use crate::error::{Error, Result};
use crate::ingest::{ApiClient, SiteSpec, TimeSeries, YearRange, PV, WEATHER_CHANNELS};
use crate::net::{init_model, predict, ModelConfig, ModelParams};
use crate::series::{
    apply_scaler, build_windows, chronological_split, fit_scaler, train_validation_split, truncate_to_months,
    ScalerMode, ScalerState, SplitSpec, WindowConfig, WindowSample, WindowSet, YearMonth,
};
use crate::synthgen::{generate_weather_scenario, ClearnessParams, WorldSpec};
use crate::train::{finetune_model, train_model, TrainConfig, TrainHistory};

/// Settings shared by all experiment runners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub source_training: TrainConfig,
    /// Training from scratch on target data.
    pub target_training: TrainConfig,
    pub finetune_training: TrainConfig,
    pub split: SplitSpec,
    pub window: WindowConfig,
    /// Add the weather channels as covariates.
    pub multivariate: bool,
    /// Scaling of the source-domain data.
    pub source_scaler: ScalerMode,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let source_training = TrainConfig::default();
        ExperimentConfig {
            model: ModelConfig::default(),
            source_training,
            target_training: source_training,
            finetune_training: TrainConfig::finetune_from(&source_training),
            split: SplitSpec::default(),
            window: WindowConfig::default(),
            multivariate: false,
            source_scaler: ScalerMode::Source,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        for tc in [&self.source_training, &self.target_training, &self.finetune_training] {
            tc.validate()?;
        }
        let features = self
            .window
            .features(if self.multivariate { WEATHER_CHANNELS.len() } else { 0 });
        if self.model.input_features != features {
            return Err(Error::Config(format!(
                "model expects {} input features but the data provides {features}",
                self.model.input_features
            )));
        }
        if self.model.lags != self.window.lags || self.model.horizon != self.window.horizon {
            return Err(Error::Config(
                "model lags/horizon must match the window settings".into(),
            ));
        }
        Ok(())
    }

    pub fn channels(&self) -> Vec<&'static str> {
        let mut c = vec![PV];
        if self.multivariate {
            c.extend(WEATHER_CHANNELS);
        }
        c
    }
}

/// Observed data of one target installation.
#[derive(Debug, Clone)]
pub struct TargetSite {
    pub id: String,
    pub site: SiteSpec,
    /// Hourly PV, plus weather channels for multivariate runs.
    pub series: TimeSeries,
}

/// A model trained on source-domain data, with the scaler fitted there.
#[derive(Debug, Clone)]
pub struct SourceModel {
    pub params: ModelParams,
    pub config: ModelConfig,
    pub scaler: ScalerState,
    pub history: TrainHistory,
}

/// Supplies source-domain series for a (possibly relocated) installation.
pub trait SourceProvider: Sync {
    fn source_series(&self, site: &SiteSpec) -> Result<TimeSeries>;
}

/// Source data from the offline generator.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticSource {
    pub climate_seed: u64,
    pub clearness: ClearnessParams,
    pub years: YearRange,
}

impl SourceProvider for SyntheticSource {
    fn source_series(&self, site: &SiteSpec) -> Result<TimeSeries> {
        generate_weather_scenario(&WorldSpec {
            site: *site,
            climate_seed: self.climate_seed,
            clearness: self.clearness,
            years: self.years,
        })
    }
}

/// Source data from PVGIS, with Open-Meteo weather for multivariate runs.
pub struct ApiSource<'a> {
    pub client: &'a ApiClient,
    pub years: YearRange,
    /// Evaluation period the source years must precede.
    pub evaluation: Option<YearRange>,
    pub multivariate: bool,
}

impl SourceProvider for ApiSource<'_> {
    fn source_series(&self, site: &SiteSpec) -> Result<TimeSeries> {
        let pv = self
            .client
            .fetch_pvgis_series(site, &self.years, self.evaluation.as_ref())?;
        if !self.multivariate {
            return Ok(pv);
        }
        let weather = self
            .client
            .fetch_openmeteo_history(site.latitude, site.longitude, &self.years)?;
        pv.merge(&weather)
    }
}

fn hash_seed(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

/// Seed of the source model built for `site_id`.
pub fn source_seed(global: u64, site_id: &str) -> u64 {
    hash_seed(&[&global.to_le_bytes(), site_id.as_bytes(), b"source"])
}

/// Seed of one experiment cell. Offsets are deliberately excluded so a
/// zero-offset misspecification cell repeats the learning-curve cell.
pub fn cell_seed(global: u64, site_id: &str, model: ModelKind, months: u32, terminal: YearMonth) -> u64 {
    hash_seed(&[
        &global.to_le_bytes(),
        site_id.as_bytes(),
        model.as_str().as_bytes(),
        &months.to_le_bytes(),
        terminal.to_string().as_bytes(),
    ])
}

fn make_windows(scaled: &TimeSeries, cfg: &ExperimentConfig) -> Result<WindowSet> {
    let covariates = if cfg.multivariate {
        Some(scaled.select(&WEATHER_CHANNELS)?)
    } else {
        None
    };
    build_windows(scaled, covariates.as_ref(), &cfg.window)
}

/// Train a source model on `source_series`: chronological 80/20 split,
/// scaler fitted on the training part only.
pub fn build_source_model(
    site_id: &str,
    source_series: &TimeSeries,
    peak_power: f64,
    cfg: &ExperimentConfig,
) -> Result<SourceModel> {
    cfg.validate()?;
    let ts = source_series.select(&cfg.channels())?;
    let (train_ts, _, boundary) = train_validation_split(&ts, cfg.split.train_fraction)?;
    let scaler = fit_scaler(&train_ts, cfg.source_scaler, peak_power)?;
    let scaled = apply_scaler(&ts, &scaler)?;
    let (train, validation) = make_windows(&scaled, cfg)?.split_at(boundary);
    let tc = TrainConfig {
        seed: source_seed(cfg.seed, site_id),
        ..cfg.source_training
    };
    let (params, history) = train_model(&cfg.model, &tc, &train.samples, &validation.samples)?;
    Ok(SourceModel {
        params,
        config: cfg.model,
        scaler,
        history,
    })
}

/// Target data scaled once, with its fixed test windows and baseline.
pub struct PreparedTarget {
    /// Scaled data before the test span.
    pub prefix: TimeSeries,
    pub scaler: ScalerState,
    pub test_start: DateTime<Utc>,
    pub test_windows: Vec<WindowSample>,
    pub naive: MetricsReport,
    /// Last month before the test span.
    pub terminal: YearMonth,
}

/// Hold out the test span, fit the target-mode scaler on everything before
/// it, and build the test windows and persistence baseline.
pub fn prepare_target(target: &TargetSite, cfg: &ExperimentConfig) -> Result<PreparedTarget> {
    let ts = target.series.select(&cfg.channels())?;
    let splits = chronological_split(&ts, &cfg.split)?;
    let start = ts.start().unwrap();
    let prefix = ts.slice_time(start, splits.test_start);
    let scaler = fit_scaler(&prefix, ScalerMode::Target, target.site.peak_power)?;
    let scaled = apply_scaler(&ts, &scaler)?;
    let test_windows: Vec<WindowSample> = make_windows(&scaled, cfg)?
        .samples
        .into_iter()
        .filter(|s| s.origin() >= splits.test_start)
        .collect();
    if test_windows.is_empty() {
        return Err(Error::InsufficientData("no complete test days".into()));
    }
    let mut pred = Vec::new();
    let mut actual = Vec::new();
    for w in &test_windows {
        pred.extend(naive_seasonal_forecast(&scaled, w.forecast_date)?);
        actual.extend_from_slice(&w.target);
    }
    let naive = compute_metrics(&pred, &actual)?;
    Ok(PreparedTarget {
        prefix: scaled.slice_time(start, splits.test_start),
        scaler,
        test_start: splits.test_start,
        test_windows,
        naive,
        terminal: YearMonth::of(&(splits.test_start - Duration::hours(1))),
    })
}

/// Pooled metrics of a model over windows.
pub fn evaluate_windows(params: &ModelParams, config: &ModelConfig, windows: &[WindowSample]) -> Result<MetricsReport> {
    let preds: Vec<Result<Vec<f64>>> = windows.par_iter().map(|w| predict(params, config, w)).collect();
    let mut pred = Vec::with_capacity(windows.len() * config.horizon);
    let mut actual = Vec::with_capacity(pred.capacity());
    for (p, w) in preds.into_iter().zip(windows) {
        pred.extend(p?);
        actual.extend_from_slice(&w.target);
    }
    compute_metrics(&pred, &actual)
}

/// Training and validation windows for `months` months ending at
/// `terminal`; `None` when the data does not cover them.
fn cell_windows(
    prep: &PreparedTarget,
    terminal: YearMonth,
    months: u32,
    cfg: &ExperimentConfig,
) -> Result<Option<(Vec<WindowSample>, Vec<WindowSample>)>> {
    if months == 0 {
        return Ok(Some((Vec::new(), Vec::new())));
    }
    if terminal.end() > prep.test_start {
        return Ok(None);
    }
    let span = match truncate_to_months(&prep.prefix, terminal, months) {
        Ok(s) => s,
        Err(Error::MissingMonths(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let boundary = match train_validation_split(&span, cfg.split.train_fraction) {
        Ok((_, _, b)) => b,
        Err(Error::InsufficientData(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let windows = match make_windows(&span, cfg) {
        Ok(w) => w,
        Err(Error::InsufficientData(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let (train, val) = windows.split_at(boundary);
    if train.is_empty() || val.is_empty() {
        return Ok(None);
    }
    Ok(Some((train.samples, val.samples)))
}

struct Cell<'a> {
    site: &'a str,
    experiment: ExperimentKind,
    months: u32,
    terminal: YearMonth,
    offset_km: f64,
}

impl Cell<'_> {
    fn row(&self, model: ModelKind, seed: u64, scaler: &ScalerState, outcome: Outcome) -> ReportRow {
        let (status, metrics) = match outcome {
            Ok(Some(m)) => (CellStatus::Ok, Some(m)),
            Ok(None) => (CellStatus::NotAvailable, None),
            Err(cause) => (CellStatus::Failed(cause), None),
        };
        ReportRow {
            site: self.site.to_string(),
            experiment: self.experiment,
            months: self.months,
            terminal_month: self.terminal,
            offset_km: self.offset_km,
            model,
            status,
            metrics,
            scaler: scaler.fingerprint(),
            seed,
        }
    }
}

type Windows = Option<(Vec<WindowSample>, Vec<WindowSample>)>;
/// Metrics, `None` for n.a., or the failure cause.
type Outcome = std::result::Result<Option<MetricsReport>, String>;

fn target_outcome(windows: &Windows, seed: u64, cfg: &ExperimentConfig, prep: &PreparedTarget) -> Outcome {
    target_metrics(windows, seed, cfg, prep).map_err(|e| e.to_string())
}

fn target_metrics(
    windows: &Windows,
    seed: u64,
    cfg: &ExperimentConfig,
    prep: &PreparedTarget,
) -> Result<Option<MetricsReport>> {
    let Some((train, val)) = windows else {
        return Ok(None);
    };
    let params = if train.is_empty() {
        init_model(&cfg.model, seed)?
    } else {
        let tc = TrainConfig {
            seed,
            ..cfg.target_training
        };
        train_model(&cfg.model, &tc, train, val)?.0
    };
    evaluate_windows(&params, &cfg.model, &prep.test_windows).map(Some)
}

fn transfer_outcome(
    windows: &Windows,
    seed: u64,
    source: &SourceModel,
    cfg: &ExperimentConfig,
    prep: &PreparedTarget,
) -> Outcome {
    transfer_metrics(windows, seed, source, cfg, prep).map_err(|e| e.to_string())
}

fn transfer_metrics(
    windows: &Windows,
    seed: u64,
    source: &SourceModel,
    cfg: &ExperimentConfig,
    prep: &PreparedTarget,
) -> Result<Option<MetricsReport>> {
    let Some((train, val)) = windows else {
        return Ok(None);
    };
    let tc = TrainConfig {
        seed,
        ..cfg.finetune_training
    };
    let (params, _) = finetune_model(&source.params, &cfg.model, &tc, train, val)?;
    evaluate_windows(&params, &cfg.model, &prep.test_windows).map(Some)
}

fn check_source(source: &SourceModel, cfg: &ExperimentConfig) -> Result<()> {
    if source.config != cfg.model {
        return Err(Error::Config(
            "source model architecture differs from the experiment model".into(),
        ));
    }
    Ok(())
}

/// Naive, target-only and transfer models for each amount of target data
/// in `months`, all ending at the last month before the test span and all
/// scored on the same test windows with the same scaler.
pub fn run_learning_curve(
    target: &TargetSite,
    source: &SourceModel,
    months: &[u32],
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    check_source(source, cfg)?;
    let prep = prepare_target(target, cfg)?;
    let rows: Vec<Vec<ReportRow>> = months
        .par_iter()
        .map(|&m| {
            let cell = Cell {
                site: &target.id,
                experiment: ExperimentKind::LearningCurve,
                months: m,
                terminal: prep.terminal,
                offset_km: 0.0,
            };
            let windows = cell_windows(&prep, prep.terminal, m, cfg);
            let (ts, fs) = (
                cell_seed(cfg.seed, &target.id, ModelKind::Target, m, prep.terminal),
                cell_seed(cfg.seed, &target.id, ModelKind::Transfer, m, prep.terminal),
            );
            let (target_res, transfer_res) = match &windows {
                Ok(w) => (
                    target_outcome(w, ts, cfg, &prep),
                    transfer_outcome(w, fs, source, cfg, &prep),
                ),
                Err(e) => (Err(e.to_string()), Err(e.to_string())),
            };
            vec![
                cell.row(ModelKind::Naive, 0, &prep.scaler, Ok(Some(prep.naive))),
                cell.row(ModelKind::Target, ts, &prep.scaler, target_res),
                cell.row(ModelKind::Transfer, fs, &prep.scaler, transfer_res),
            ]
        })
        .collect();
    Ok(ExperimentReport {
        rows: rows.into_iter().flatten().collect(),
    })
}

/// Target-only models (and transfer models when `source` is given) for every
/// terminal month and every `m` in `0..=max_m`. Cells whose months are not
/// all available before the test span are reported as n.a.
pub fn run_seasonality_grid(
    target: &TargetSite,
    terminal_months: &[YearMonth],
    max_m: u32,
    source: Option<&SourceModel>,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    if let Some(s) = source {
        check_source(s, cfg)?;
    }
    let prep = prepare_target(target, cfg)?;
    let grid: Vec<(YearMonth, u32)> = terminal_months
        .iter()
        .flat_map(|t| (0..=max_m).map(move |m| (*t, m)))
        .collect();
    let rows: Vec<Vec<ReportRow>> = grid
        .par_iter()
        .map(|&(terminal, m)| {
            let cell = Cell {
                site: &target.id,
                experiment: ExperimentKind::Seasonality,
                months: m,
                terminal,
                offset_km: 0.0,
            };
            let windows = cell_windows(&prep, terminal, m, cfg);
            let ts = cell_seed(cfg.seed, &target.id, ModelKind::Target, m, terminal);
            let fs = cell_seed(cfg.seed, &target.id, ModelKind::Transfer, m, terminal);
            let mut out = vec![cell.row(ModelKind::Naive, 0, &prep.scaler, Ok(Some(prep.naive)))];
            match &windows {
                Ok(w) => {
                    out.push(cell.row(ModelKind::Target, ts, &prep.scaler, target_outcome(w, ts, cfg, &prep)));
                    if let Some(s) = source {
                        out.push(cell.row(
                            ModelKind::Transfer,
                            fs,
                            &prep.scaler,
                            transfer_outcome(w, fs, s, cfg, &prep),
                        ));
                    }
                }
                Err(e) => out.push(cell.row(ModelKind::Target, ts, &prep.scaler, Err(e.to_string()))),
            }
            out
        })
        .collect();
    Ok(ExperimentReport {
        rows: rows.into_iter().flatten().collect(),
    })
}

/// Build one source model per offset (moved `offset` km along `bearing`
/// from the target site), then fine-tune and score it against the true
/// site for each amount of target data in `months`.
pub fn run_misspecification(
    target: &TargetSite,
    provider: &dyn SourceProvider,
    offsets_km: &[f64],
    bearing: f64,
    months: &[u32],
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    if let Some(bad) = offsets_km.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(Error::Config(format!(
            "offset distance must be non-negative, got {bad}"
        )));
    }
    let prep = prepare_target(target, cfg)?;
    let windows: Vec<Result<Windows>> = months
        .iter()
        .map(|&m| cell_windows(&prep, prep.terminal, m, cfg))
        .collect();

    let rows: Vec<Vec<ReportRow>> = offsets_km
        .par_iter()
        .map(|&offset| {
            let (lat, lon) = destination_point(target.site.latitude, target.site.longitude, bearing, offset);
            let source = target
                .site
                .relocated(lat, lon)
                .and_then(|s| provider.source_series(&s))
                .and_then(|series| build_source_model(&target.id, &series, target.site.peak_power, cfg));
            let mut out = Vec::new();
            for (&m, w) in months.iter().zip(&windows) {
                let cell = Cell {
                    site: &target.id,
                    experiment: ExperimentKind::Misspecification,
                    months: m,
                    terminal: prep.terminal,
                    offset_km: offset,
                };
                let fs = cell_seed(cfg.seed, &target.id, ModelKind::Transfer, m, prep.terminal);
                let outcome = match (&source, w) {
                    (Ok(s), Ok(w)) => transfer_outcome(w, fs, s, cfg, &prep),
                    (Err(e), _) | (_, Err(e)) => Err(e.to_string()),
                };
                out.push(cell.row(ModelKind::Naive, 0, &prep.scaler, Ok(Some(prep.naive))));
                out.push(cell.row(ModelKind::Transfer, fs, &prep.scaler, outcome));
            }
            out
        })
        .collect();
    Ok(ExperimentReport {
        rows: rows.into_iter().flatten().collect(),
    })
}
