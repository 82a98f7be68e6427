//! Baseline, metrics, skill scores and the experiment runners.
//!
//! All metrics are computed on scaled values. Skill scores are
//! `100 * (model_rmse / baseline_rmse - 1)`, so negative numbers mean the
//! model beats previous-day persistence.

mod experiment;
mod forecast;
mod geo;
mod metrics;
mod report;

pub use experiment::{
    build_source_model, cell_seed, evaluate_windows, prepare_target, run_learning_curve, run_misspecification,
    run_seasonality_grid, source_seed, ApiSource, ExperimentConfig, PreparedTarget, SourceModel, SourceProvider,
    SyntheticSource, TargetSite,
};
pub use forecast::{evaluate_checkpoint, forecast_day_ahead, CheckpointScore, DayAheadForecast};
pub use geo::{destination_point, haversine_km, EARTH_RADIUS_KM};
pub use metrics::{compute_metrics, median, naive_seasonal_forecast, percentile, skill_score, MetricsReport};
pub use report::{
    AggregateRow, CellStatus, ExperimentKind, ExperimentReport, ModelKind, ReportRow, SkillMatrix, NOT_AVAILABLE,
    REPORT_COLUMNS,
};
