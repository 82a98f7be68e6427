//! Training loops: source-domain training from scratch and target-domain
//! fine-tuning with a frozen first layer.
//!
//! Both loops shuffle the training windows every epoch with a seeded
//! generator, evaluate the validation MSE in inference mode after each
//! epoch, and return the parameters with the lowest validation loss seen.
//! The starting parameters count as a candidate too, so fine-tuning never
//! returns a model that validates worse than the one it started from.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{
    adam_step, backward, clip_global_norm, mse_loss, predict, sample_seed, ModelConfig, ModelParams, OptimizerState,
};
use crate::series::WindowSample;

/// Default source-domain learning rate.
pub const SOURCE_LEARNING_RATE: f64 = 1e-4;
/// Fine-tuning divides the source learning rate by this factor.
pub const FINETUNE_RATE_DIVISOR: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many consecutive epochs without a new best
    /// validation loss. Zero stops after the first epoch.
    pub patience: usize,
    pub seed: u64,
    pub freeze_first_layer: bool,
    /// Global gradient-norm bound; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: SOURCE_LEARNING_RATE,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            freeze_first_layer: false,
            clip_norm: Some(5.0),
        }
    }
}

impl TrainConfig {
    /// Fine-tuning settings derived from a source run: learning rate divided
    /// by 100 and the first layer frozen.
    pub fn finetune_from(source: &TrainConfig) -> Self {
        TrainConfig {
            learning_rate: source.learning_rate / FINETUNE_RATE_DIVISOR,
            freeze_first_layer: true,
            ..*source
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size and epoch budget must be positive".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Config(format!("clip norm must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean training loss (dropout active) per completed epoch.
    pub train_loss: Vec<f64>,
    /// Validation loss after each completed epoch.
    pub val_loss: Vec<f64>,
    /// Validation loss of the starting parameters.
    pub initial_val_loss: f64,
    /// 1-based epoch whose parameters were returned; `None` when the starting
    /// parameters were never beaten (or no epoch ran).
    pub best_epoch: Option<usize>,
    pub best_val_loss: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub wall_time_secs: f64,
}

impl TrainHistory {
    pub fn epochs_run(&self) -> usize {
        self.val_loss.len()
    }

    /// Same losses and selection, ignoring wall time.
    pub fn same_run(&self, other: &TrainHistory) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        bits(&self.train_loss) == bits(&other.train_loss)
            && bits(&self.val_loss) == bits(&other.val_loss)
            && self.initial_val_loss.to_bits() == other.initial_val_loss.to_bits()
            && self.best_epoch == other.best_epoch
    }

    /// `epoch,train_loss,val_loss`; epoch 0 is the starting point and has an
    /// empty training loss.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Io {
            context: "writing training history".into(),
            source: std::io::Error::other(e),
        };
        out.write_record(["epoch", "train_loss", "val_loss"]).map_err(err)?;
        out.write_record(["0".to_string(), String::new(), self.initial_val_loss.to_string()])
            .map_err(err)?;
        for (e, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            out.write_record([(e + 1).to_string(), t.to_string(), v.to_string()])
                .map_err(err)?;
        }
        out.flush().map_err(|e| Error::io("writing training history", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Mean per-window MSE in inference mode.
pub fn evaluate_loss(params: &ModelParams, config: &ModelConfig, windows: &[WindowSample]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::InsufficientData("no windows to evaluate".into()));
    }
    let losses: Vec<Result<f64>> = windows
        .par_iter()
        .map(|s| mse_loss(&predict(params, config, s)?, &s.target))
        .collect();
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / windows.len() as f64)
}

fn check_features(config: &ModelConfig, sets: [&[WindowSample]; 2]) -> Result<()> {
    for s in sets.iter().flat_map(|s| s.iter()) {
        if s.features != config.input_features {
            return Err(Error::Shape(format!(
                "windows carry {} features per step, model expects {}",
                s.features, config.input_features
            )));
        }
    }
    Ok(())
}

/// Train from `params` and return the best-validating parameters.
fn fit(
    start: &ModelParams,
    config: &ModelConfig,
    tc: &TrainConfig,
    train: &[WindowSample],
    validation: &[WindowSample],
) -> Result<(ModelParams, TrainHistory)> {
    let clock = Instant::now();
    let initial_val_loss = evaluate_loss(start, config, validation)?;
    let mut params = start.clone();
    let mut opt = OptimizerState::new(&params);
    if tc.freeze_first_layer {
        opt.freeze_layer(0);
    }
    let mut best = params.clone();
    let mut best_val = initial_val_loss;
    let mut best_epoch = None;
    let mut train_losses = Vec::new();
    let mut val_losses = Vec::new();
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=tc.max_epochs {
        let epoch_seed = sample_seed(tc.seed, epoch as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, idx) in order.chunks(tc.batch_size).enumerate() {
            let batch: Vec<WindowSample> = idx.iter().map(|&i| train[i].clone()).collect();
            let mut g = match backward(&params, config, &batch, sample_seed(!epoch_seed, b as u64)) {
                Ok(g) => g,
                Err(Error::NonFinite(_)) => return Err(Error::Divergence { epoch, loss: f64::NAN }),
                Err(e) => return Err(e),
            };
            epoch_loss += g.loss * batch.len() as f64;
            for (t, frozen) in g.grads.tensors_mut().into_iter().zip(&opt.frozen) {
                if *frozen {
                    t.iter_mut().for_each(|v| *v = 0.0);
                }
            }
            if let Some(c) = tc.clip_norm {
                clip_global_norm(&mut g.grads, c);
            }
            adam_step(&mut params, &g.grads, &mut opt, tc.learning_rate)?;
        }
        epoch_loss /= train.len() as f64;
        let val = evaluate_loss(&params, config, validation)?;
        if !epoch_loss.is_finite() || !val.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: if epoch_loss.is_finite() { val } else { epoch_loss },
            });
        }
        log::debug!("epoch {epoch}: train {epoch_loss:.6} val {val:.6}");
        train_losses.push(epoch_loss);
        val_losses.push(val);
        if val < best_val {
            best_val = val;
            best = params.clone();
            best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= tc.patience {
            break;
        }
    }

    Ok((
        best,
        TrainHistory {
            train_loss: train_losses,
            val_loss: val_losses,
            initial_val_loss,
            best_epoch,
            best_val_loss: best_val,
            max_epochs: tc.max_epochs,
            patience: tc.patience,
            wall_time_secs: clock.elapsed().as_secs_f64(),
        },
    ))
}

/// Train a freshly initialized model. The model is seeded from `tc.seed`.
pub fn train_model(
    config: &ModelConfig,
    tc: &TrainConfig,
    train: &[WindowSample],
    validation: &[WindowSample],
) -> Result<(ModelParams, TrainHistory)> {
    config.validate()?;
    tc.validate()?;
    if train.is_empty() {
        return Err(Error::InsufficientData("no training windows".into()));
    }
    if validation.is_empty() {
        return Err(Error::InsufficientData("no validation windows".into()));
    }
    check_features(config, [train, validation])?;
    let start = crate::net::init_model(config, tc.seed)?;
    fit(&start, config, tc, train, validation)
}

/// Continue training `source` on target windows. With no training windows
/// the source model is returned unchanged (direct application).
pub fn finetune_model(
    source: &ModelParams,
    config: &ModelConfig,
    tc: &TrainConfig,
    target_train: &[WindowSample],
    target_validation: &[WindowSample],
) -> Result<(ModelParams, TrainHistory)> {
    config.validate()?;
    tc.validate()?;
    if !source.matches(config) {
        return Err(Error::Shape(
            "source parameters do not match the model configuration".into(),
        ));
    }
    check_features(config, [target_train, target_validation])?;
    if target_train.is_empty() {
        let initial = if target_validation.is_empty() {
            f64::NAN
        } else {
            evaluate_loss(source, config, target_validation)?
        };
        return Ok((
            source.clone(),
            TrainHistory {
                train_loss: Vec::new(),
                val_loss: Vec::new(),
                initial_val_loss: initial,
                best_epoch: None,
                best_val_loss: initial,
                max_epochs: tc.max_epochs,
                patience: tc.patience,
                wall_time_secs: 0.0,
            },
        ));
    }
    if target_validation.is_empty() {
        return Err(Error::InsufficientData("no validation windows".into()));
    }
    fit(source, config, tc, target_train, target_validation)
}

#[cfg(test)]
mod tests {
    use chrono::{Duration, NaiveDate, TimeZone, Utc};

    use super::*;
    use crate::net::init_model;

    // Daily sine curves with a day-dependent amplitude; yesterday predicts today.
    fn windows(days: usize, offset: usize) -> Vec<WindowSample> {
        let start = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        let amp = |d: usize| 0.5 + 0.4 * ((d as f64) * 0.7).sin();
        let day = |d: usize| -> Vec<f64> {
            (0..24)
                .map(|h| amp(d) * ((h as f64 - 6.0) / 12.0 * std::f64::consts::PI).sin().max(0.0))
                .collect()
        };
        (offset..offset + days)
            .map(|d| {
                let prev = day(d);
                let mut inputs = Vec::new();
                for (h, v) in prev.iter().enumerate() {
                    let a = h as f64 / 24.0 * std::f64::consts::TAU;
                    inputs.extend([*v, a.sin(), a.cos()]);
                }
                let t0 = start + Duration::days(d as i64);
                WindowSample {
                    inputs,
                    features: 3,
                    target: day(d + 1),
                    forecast_date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + Duration::days(d as i64 + 1),
                    input_times: (0..24).map(|h| t0 + Duration::hours(h)).collect(),
                    target_times: (24..48).map(|h| t0 + Duration::hours(h)).collect(),
                }
            })
            .collect()
    }

    fn small() -> ModelConfig {
        ModelConfig {
            num_layers: 2,
            hidden_units: 8,
            dropout_rate: 0.1,
            ..ModelConfig::default()
        }
    }

    fn quick(epochs: usize) -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-2,
            batch_size: 8,
            max_epochs: epochs,
            patience: epochs,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn learns_and_returns_best() {
        let (tr, va) = (windows(60, 0), windows(15, 60));
        let (p, h) = train_model(&small(), &quick(15), &tr, &va).unwrap();
        assert!(h.best_val_loss < h.initial_val_loss);
        let min = h.val_loss.iter().cloned().fold(h.initial_val_loss, f64::min);
        assert_eq!(h.best_val_loss, min);
        assert_eq!(evaluate_loss(&p, &small(), &va).unwrap(), h.best_val_loss);
    }

    #[test]
    fn patience_zero_runs_one_epoch() {
        let tc = TrainConfig {
            patience: 0,
            ..quick(10)
        };
        let (_, h) = train_model(&small(), &tc, &windows(20, 0), &windows(5, 20)).unwrap();
        assert_eq!(h.epochs_run(), 1);
    }

    #[test]
    fn reproducible() {
        let (tr, va) = (windows(30, 0), windows(8, 30));
        let (p1, h1) = train_model(&small(), &quick(4), &tr, &va).unwrap();
        let (p2, h2) = train_model(&small(), &quick(4), &tr, &va).unwrap();
        assert!(h1.same_run(&h2));
        assert_eq!(p1, p2);
    }

    #[test]
    fn empty_sets_rejected() {
        assert!(train_model(&small(), &quick(2), &windows(5, 0), &[]).is_err());
        assert!(train_model(&small(), &quick(2), &[], &windows(5, 0)).is_err());
    }

    #[test]
    fn finetune_direct_application() {
        let src = init_model(&small(), 1).unwrap();
        let tc = TrainConfig::finetune_from(&quick(3));
        let (p, h) = finetune_model(&src, &small(), &tc, &[], &windows(5, 0)).unwrap();
        assert_eq!(p, src);
        assert_eq!(h.epochs_run(), 0);
    }

    #[test]
    fn finetune_freezes_first_layer_and_never_worsens() {
        let src = init_model(&small(), 1).unwrap();
        let tc = TrainConfig {
            learning_rate: 1e-3,
            ..TrainConfig::finetune_from(&quick(5))
        };
        assert!(tc.freeze_first_layer);
        let va = windows(8, 40);
        let (p, h) = finetune_model(&src, &small(), &tc, &windows(30, 0), &va).unwrap();
        assert_eq!(p.layers[0], src.layers[0]);
        assert!(h.best_val_loss <= evaluate_loss(&src, &small(), &va).unwrap());
    }

    #[test]
    fn finetune_rate_divisor() {
        let tc = TrainConfig::finetune_from(&TrainConfig::default());
        assert!((tc.learning_rate - 1e-6).abs() < 1e-20);
    }

    #[test]
    fn feature_mismatch_rejected() {
        let cfg = ModelConfig {
            input_features: 4,
            ..small()
        };
        let src = init_model(&cfg, 1).unwrap();
        let err = finetune_model(&src, &cfg, &quick(2), &windows(4, 0), &windows(4, 4)).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn divergence_reports_epoch() {
        let mut cfg = small();
        cfg.dropout_rate = 0.0;
        let mut src = init_model(&cfg, 1).unwrap();
        src.w_out.data[0] = 1e300;
        let tc = TrainConfig {
            clip_norm: None,
            ..quick(3)
        };
        let err = finetune_model(&src, &cfg, &tc, &windows(4, 0), &windows(4, 4));
        assert!(matches!(err, Err(Error::Divergence { epoch: 1, .. })), "{err:?}");
    }

    #[test]
    fn history_csv() {
        let (_, h) = train_model(&small(), &quick(2), &windows(10, 0), &windows(4, 10)).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epoch,train_loss,val_loss\n0,,"));
        assert_eq!(text.lines().count(), 2 + h.epochs_run());
    }
}
