//! Day-ahead solar PV forecasting with LSTM transfer learning.
//!
//! A source model is pre-trained on abundant synthetic PV data (PVGIS
//! simulations, or the offline generator in [`synthgen`]) for a site that
//! mimics the target installation, then fine-tuned on the few months of
//! observed data the target actually has. The [`eval`] module compares
//! zero-shot, fine-tuned and from-scratch models against a naive seasonal
//! persistence baseline.
//!
//! Module map:
//!
//! * [`ingest`] - API clients (PVGIS, Open-Meteo), CSV loaders, [`TimeSeries`].
//! * [`series`] - resampling, chronological splits, min-max scaling, windowing.
//! * [`net`] - the LSTM: forward pass, BPTT gradients, ADAM, checkpoints.
//! * [`train`] - source training and frozen-layer fine-tuning.
//! * [`eval`] - baseline, metrics, skill scores and experiment runners.
//! * [`synthgen`] - deterministic synthetic PV and weather worlds.

pub mod error;
pub mod eval;
pub mod ingest;
pub mod net;
pub mod series;
pub mod synthgen;
pub mod train;

pub use error::{Error, ErrorClass, Result};
pub use ingest::{Channel, SiteSpec, TimeSeries, Unit, YearRange};
