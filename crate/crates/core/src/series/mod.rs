//! Turning raw series into model-ready data: hourly resampling,
//! chronological splits, min-max scaling (with the peak-power override for
//! target data), cyclical hour features and 24-lag/24-horizon windows.
//!
//! Everything here is a pure function of its inputs.

mod calendar;
mod resample;
mod scaler;
mod split;
mod windows;

pub use calendar::{day_floor, YearMonth};
pub use resample::resample_hourly;
pub use scaler::{apply_scaler, fit_scaler, invert_scaler, ChannelScale, ScalerMode, ScalerState, PEAK_POWER_FACTOR};
pub use split::{chronological_split, train_validation_split, truncate_to_months, SplitSpec, Splits};
pub use windows::{
    build_windows, encode_hour_cyclical, read_windows, write_windows, WindowConfig, WindowSample, WindowSet,
};
