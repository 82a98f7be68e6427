use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{Datelike, Duration};
use log::{info, warn};
use solnet::eval::{
    build_source_model, cell_seed, evaluate_checkpoint, forecast_day_ahead, run_learning_curve, run_misspecification,
    run_seasonality_grid, source_seed, ApiSource, ExperimentReport, ModelKind, SourceModel, SourceProvider,
    SyntheticSource, TargetSite,
};
use solnet::ingest::{
    load_pv_csv, load_weather_forecast_csv, write_pv_csv, write_weather_forecast_csv, ApiClient, Cache, HttpResponse,
    Resolution, Transport, WEATHER_CHANNELS,
};
use solnet::net::{load_model, save_model, Checkpoint};
use solnet::series::{
    apply_scaler, build_windows, chronological_split, fit_scaler, resample_hourly, train_validation_split, ScalerMode,
    WindowSet, YearMonth,
};
use solnet::synthgen::{write_world_csvs, WorldSpec};
use solnet::train::{finetune_model, TrainConfig, TrainHistory};
use solnet::{Error, Result, TimeSeries, YearRange};

use crate::config::{RunConfig, SourceKind};

/// Stands in for HTTP when `--live` is not given. Cached responses are
/// still served, since the cache is consulted first.
struct Offline;

impl Transport for Offline {
    fn get(&self, url: &str, _query: &[(String, String)]) -> Result<HttpResponse> {
        Err(Error::Network {
            url: url.to_string(),
            retryable: false,
            message: "network access is disabled; pass --live to allow it".into(),
        })
    }
}

pub struct Ctx {
    pub cfg: RunConfig,
    pub live: bool,
}

impl Ctx {
    fn out(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    /// Creates the output directory and records the resolved configuration.
    pub fn prepare_output(&self) -> Result<()> {
        let dir = &self.cfg.output_dir;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        write_text(&self.out("resolved_config.toml"), &self.cfg.to_toml()?)?;
        let seeds = self.out("seeds.csv");
        if seeds.exists() {
            std::fs::remove_file(&seeds).map_err(|e| Error::io(format!("removing {}", seeds.display()), e))?;
        }
        self.record_seeds(&[("global".into(), self.cfg.seed)])
    }

    fn client(&self) -> Result<ApiClient> {
        let dir = std::env::var_os("SOLNET_CACHE_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|| self.out("cache"));
        let cache = Cache::new(dir)?;
        Ok(if self.live {
            ApiClient::live(Some(cache))
        } else {
            ApiClient::new(Arc::new(Offline), Some(cache))
        })
    }

    fn required(&self, path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
        path.clone()
            .ok_or_else(|| Error::Config(format!("this command needs data.{key}")))
    }

    fn site(&self) -> solnet::SiteSpec {
        // validated when the configuration was loaded
        self.cfg.site.spec().expect("validated site")
    }

    /// Appends `name,seed` lines to `seeds.csv` in the output directory.
    fn record_seeds(&self, seeds: &[(String, u64)]) -> Result<()> {
        let path = self.out("seeds.csv");
        let mut text = if path.exists() {
            std::fs::read_to_string(&path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?
        } else {
            String::from("name,seed\n")
        };
        for (name, seed) in seeds {
            text.push_str(&format!("{name},{seed}\n"));
        }
        write_text(&path, &text)
    }

    fn load_target(&self) -> Result<TargetSite> {
        let path = self.required(&self.cfg.data.target_csv, "target_csv")?;
        self.load_site_data(&path)
    }

    fn load_site_data(&self, path: &Path) -> Result<TargetSite> {
        let mut series = hourly(load_pv_csv(path, &self.site())?)?;
        if self.cfg.experiment.multivariate {
            let weather = self.required(&self.cfg.data.weather_csv, "weather_csv")?;
            series = series.merge(&load_weather_forecast_csv(&weather)?.series)?;
        }
        Ok(TargetSite {
            id: self.cfg.site.id.clone(),
            site: self.site(),
            series,
        })
    }

    /// Years the source data must precede: those of the target data, when known.
    fn evaluation_years(&self) -> Result<Option<YearRange>> {
        let Some(path) = &self.cfg.data.target_csv else {
            return Ok(None);
        };
        let ts = load_pv_csv(path, &self.site())?;
        match (ts.start(), ts.end()) {
            (Some(a), Some(b)) => {
                let last = b - Duration::hours(1);
                Ok(Some(YearRange::new(a.year(), last.year())?))
            }
            _ => Ok(None),
        }
    }

    fn provider<'a>(&self, client: &'a ApiClient) -> Result<Box<dyn SourceProvider + 'a>> {
        let years = self.cfg.source.years()?;
        Ok(match self.cfg.source.kind {
            SourceKind::Synthetic => Box::new(SyntheticSource {
                climate_seed: self.cfg.source.climate_seed,
                clearness: self.cfg.source.clearness,
                years,
            }),
            SourceKind::Pvgis => {
                let evaluation = self.evaluation_years()?;
                match &evaluation {
                    Some(e) => years.ensure_precedes(e)?,
                    None => warn!("no data.target_csv given, so the source years are not checked for leakage"),
                }
                Box::new(ApiSource {
                    client,
                    years,
                    evaluation,
                    multivariate: self.cfg.experiment.multivariate,
                })
            }
        })
    }

    fn checkpoint(&self) -> Result<Checkpoint> {
        let path = self.required(&self.cfg.data.checkpoint, "checkpoint")?;
        let ckpt = load_model(&path)?;
        let model = &self.cfg.experiment.model;
        if ckpt.config.input_features != model.input_features || ckpt.config.horizon != model.horizon {
            return Err(Error::Config(format!(
                "{} has {} input features and horizon {}, the configuration expects {} and {}",
                path.display(),
                ckpt.config.input_features,
                ckpt.config.horizon,
                model.input_features,
                model.horizon
            )));
        }
        Ok(ckpt)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))
}

fn hourly(ts: TimeSeries) -> Result<TimeSeries> {
    if ts.resolution() == Resolution::Hourly {
        Ok(ts)
    } else {
        resample_hourly(&ts)
    }
}

fn windows(scaled: &TimeSeries, ctx: &Ctx) -> Result<WindowSet> {
    let cov = if ctx.cfg.experiment.multivariate {
        Some(scaled.select(&WEATHER_CHANNELS)?)
    } else {
        None
    };
    build_windows(scaled, cov.as_ref(), &ctx.cfg.experiment.window)
}

pub fn fetch(ctx: &Ctx) -> Result<()> {
    let client = ctx.client()?;
    let series = ctx.provider(&client)?.source_series(&ctx.site())?;
    write_pv_csv(&series, ctx.out("source_pv.csv"))?;
    if ctx.cfg.experiment.multivariate {
        write_weather_forecast_csv(&series.select(&WEATHER_CHANNELS)?, ctx.out("source_weather.csv"))?;
    }
    info!("wrote {} source hours", series.len());
    Ok(())
}

pub fn build_source(ctx: &Ctx) -> Result<()> {
    let client = ctx.client()?;
    let series = ctx.provider(&client)?.source_series(&ctx.site())?;
    let source = train_source(ctx, &series)?;
    info!(
        "source model: best validation loss {:.5} after {} epochs",
        source.history.best_val_loss,
        source.history.epochs_run()
    );
    Ok(())
}

/// Fine-tunes the checkpoint on the target data before the test span, with
/// a target-mode scaler fitted on that same data.
pub fn finetune(ctx: &Ctx) -> Result<()> {
    let exp = &ctx.cfg.experiment;
    let ckpt = ctx.checkpoint()?;
    let target = ctx.load_target()?;
    let ts = target.series.select(&exp.channels())?;
    let test_start = chronological_split(&ts, &exp.split)?.test_start;
    let prefix = ts.slice_time(ts.start().unwrap(), test_start);
    let scaler = fit_scaler(&prefix, ScalerMode::Target, target.site.peak_power)?;
    let scaled = apply_scaler(&prefix, &scaler)?;
    let (_, _, boundary) = train_validation_split(&scaled, exp.split.train_fraction)?;
    let (train, val) = windows(&scaled, ctx)?.split_at(boundary);

    let first = YearMonth::of(&prefix.start().unwrap());
    let terminal = YearMonth::of(&(test_start - Duration::hours(1)));
    let months = (first.months_until(terminal) + 1) as u32;
    let tc = TrainConfig {
        seed: cell_seed(ctx.cfg.seed, &target.id, ModelKind::Transfer, months, terminal),
        ..exp.finetune_training
    };
    info!(
        "fine-tuning on {} + {} windows, seed {}",
        train.len(),
        val.len(),
        tc.seed
    );
    ctx.record_seeds(&[("finetune".into(), tc.seed)])?;
    let (params, history) = finetune_model(&ckpt.params, &ckpt.config, &tc, &train.samples, &val.samples)?;
    save_model(&params, &ckpt.config, &scaler, &ctx.out("finetuned.ckpt"))?;
    history.save_csv(&ctx.out("finetune_history.csv"))
}

pub fn forecast(ctx: &Ctx) -> Result<()> {
    let ckpt = ctx.checkpoint()?;
    let path = ctx.required(&ctx.cfg.data.history_csv, "history_csv")?;
    let history = hourly(load_pv_csv(&path, &ctx.site())?)?;
    let weather = match &ctx.cfg.data.forecast_weather_csv {
        Some(p) => Some(load_weather_forecast_csv(p)?.series),
        None => None,
    };
    let f = forecast_day_ahead(
        &ckpt,
        &history,
        weather.as_ref(),
        ctx.cfg.experiment.window.utc_offset_hours,
    )?;
    let mut text = String::from("timestamp,power_kw\n");
    for (t, p) in f.times.iter().zip(&f.power_kw) {
        text.push_str(&format!("{},{p:.6}\n", t.format("%Y-%m-%dT%H:%M:%SZ")));
    }
    write_text(&ctx.out("forecast.csv"), &text)?;
    print!("{text}");
    Ok(())
}

/// Scores the checkpoint and persistence on `data.test_csv`, or else on the
/// test span of the target data.
pub fn evaluate(ctx: &Ctx) -> Result<()> {
    let exp = &ctx.cfg.experiment;
    let ckpt = ctx.checkpoint()?;
    let test = match &ctx.cfg.data.test_csv {
        Some(path) => ctx.load_site_data(path)?.series.select(&exp.channels())?,
        None => {
            let ts = ctx.load_target()?.series.select(&exp.channels())?;
            let test_start = chronological_split(&ts, &exp.split)?.test_start;
            // the first test day needs its lag hours and the previous day for persistence
            let lead = Duration::hours(exp.window.lags.max(24) as i64);
            ts.slice_time(test_start - lead, ts.end().unwrap())
        }
    };
    let score = evaluate_checkpoint(&ckpt, &test, exp.window.utc_offset_hours)?;
    let skill = solnet::eval::skill_score(score.model.rmse, score.naive.rmse)?;
    let mut text = String::from("model,rmse,mae,mbe,n,skill\n");
    text.push_str(&format!(
        "checkpoint,{},{},{},{},{skill}\n",
        score.model.rmse, score.model.mae, score.model.mbe, score.model.n
    ));
    text.push_str(&format!(
        "naive,{},{},{},{},0\n",
        score.naive.rmse, score.naive.mae, score.naive.mbe, score.naive.n
    ));
    write_text(&ctx.out("metrics.csv"), &text)?;
    info!(
        "{} test days ({} skipped): rmse {:.4} vs naive {:.4}, skill {skill:.1}",
        score.days, score.skipped_days, score.model.rmse, score.naive.rmse
    );
    print!("{text}");
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ExperimentChoice {
    LearningCurve,
    Seasonality,
    Misspec,
}

/// The source model: loaded from `data.checkpoint` when given, otherwise
/// trained on the configured source data.
fn source_model(ctx: &Ctx, client: &ApiClient) -> Result<SourceModel> {
    if ctx.cfg.data.checkpoint.is_some() {
        let ckpt = ctx.checkpoint()?;
        if ckpt.config != ctx.cfg.experiment.model {
            return Err(Error::Config(
                "checkpoint architecture differs from experiment.model".into(),
            ));
        }
        return Ok(SourceModel {
            params: ckpt.params,
            config: ckpt.config,
            scaler: ckpt.scaler,
            history: TrainHistory {
                train_loss: Vec::new(),
                val_loss: Vec::new(),
                initial_val_loss: f64::NAN,
                best_epoch: None,
                best_val_loss: f64::NAN,
                max_epochs: 0,
                patience: 0,
                wall_time_secs: 0.0,
            },
        });
    }
    let series = ctx.provider(client)?.source_series(&ctx.site())?;
    train_source(ctx, &series)
}

/// Trains the source model and writes its checkpoint, history and seed.
fn train_source(ctx: &Ctx, series: &TimeSeries) -> Result<SourceModel> {
    let id = &ctx.cfg.site.id;
    let source = build_source_model(id, series, ctx.site().peak_power, &ctx.cfg.experiment)?;
    save_model(&source.params, &source.config, &source.scaler, &ctx.out("source.ckpt"))?;
    source.history.save_csv(&ctx.out("source_history.csv"))?;
    ctx.record_seeds(&[("source".into(), source_seed(ctx.cfg.seed, id))])?;
    Ok(source)
}

pub fn experiment(ctx: &Ctx, choice: ExperimentChoice) -> Result<()> {
    let (exp, grid) = (&ctx.cfg.experiment, &ctx.cfg.grid);
    let client = ctx.client()?;
    let target = ctx.load_target()?;
    let report = match choice {
        ExperimentChoice::LearningCurve => {
            let source = source_model(ctx, &client)?;
            run_learning_curve(&target, &source, &grid.months, exp)?
        }
        ExperimentChoice::Seasonality => {
            if grid.terminal_months.is_empty() {
                return Err(Error::Config("grid.terminal_months is empty".into()));
            }
            let source = if grid.with_transfer {
                Some(source_model(ctx, &client)?)
            } else {
                None
            };
            run_seasonality_grid(&target, &grid.terminal_months, grid.max_months, source.as_ref(), exp)?
        }
        ExperimentChoice::Misspec => {
            let provider = ctx.provider(&client)?;
            run_misspecification(
                &target,
                provider.as_ref(),
                &grid.offsets_km,
                grid.bearing_deg,
                &grid.months,
                exp,
            )?
        }
    };
    write_report(ctx, &report, choice != ExperimentChoice::Misspec)
}

fn write_report(ctx: &Ctx, report: &ExperimentReport, skill_tables: bool) -> Result<()> {
    report.save_csv(&ctx.out("report.csv"))?;
    let seeds: Vec<(String, u64)> = report
        .rows
        .iter()
        .filter(|r| r.model != ModelKind::Naive)
        .map(|r| {
            let name = format!(
                "{}/{}/{}m/{}/{}km",
                r.site,
                r.model.as_str(),
                r.months,
                r.terminal_month,
                r.offset_km
            );
            (name, r.seed)
        })
        .collect();
    ctx.record_seeds(&seeds)?;
    report.write_plot_data(create(&ctx.out("plot_data.csv"))?)?;
    if skill_tables {
        for model in [ModelKind::Target, ModelKind::Transfer] {
            if report.rows.iter().any(|r| r.model == model) {
                let path = ctx.out(&format!("skill_{}.csv", model.as_str()));
                report.skill_matrix(model).write_csv(create(&path)?)?;
            }
        }
    }
    let failed = report
        .rows
        .iter()
        .filter(|r| r.status.to_string().starts_with("failed"))
        .count();
    if failed > 0 {
        warn!("{failed} cells failed; see report.csv");
    }
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "{} rows written to {}",
        report.rows.len(),
        ctx.cfg.output_dir.display()
    )
    .map_err(|e| Error::io("writing to stdout", e))
}

pub fn synth(ctx: &Ctx) -> Result<()> {
    let s = &ctx.cfg.synth;
    let world = WorldSpec {
        site: ctx.site(),
        climate_seed: s.climate_seed,
        clearness: s.clearness,
        years: YearRange::new(s.start_year, s.end_year)?,
    };
    let ts = write_world_csvs(&world, &ctx.cfg.output_dir)?;
    info!("wrote {} hours of synthetic PV and weather", ts.len());
    Ok(())
}
