use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cell::{step, StepCache};
use super::config::ModelConfig;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::series::WindowSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active.
    Train,
    /// Deterministic; dropout is the identity.
    Infer,
}

/// Derive an independent seed for item `index` of a stream seeded by `base`.
pub fn sample_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Inverted-dropout mask: each entry is `0` with probability `rate`, else
/// `1 / (1 - rate)`.
pub fn dropout_mask(rate: f64, len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_mask(&mut rng, rate, len)
}

fn draw_mask(rng: &mut ChaCha8Rng, rate: f64, len: usize) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

/// Everything the backward pass needs from one forward pass.
pub(crate) struct ForwardCache {
    pub steps: usize,
    /// `layers[l][t]`
    pub layers: Vec<Vec<StepCache>>,
    /// Dropout mask applied to each layer's output, when active.
    pub masks: Vec<Option<Vec<f64>>>,
    /// Top-layer output at the last step, after dropout.
    pub top: Vec<f64>,
}

impl ForwardCache {
    /// Output of layer `l` at step `t` as seen by the layer above.
    pub fn layer_output(&self, l: usize, t: usize) -> Vec<f64> {
        let h = &self.layers[l][t].h;
        match &self.masks[l] {
            Some(m) => h.iter().zip(m).map(|(a, b)| a * b).collect(),
            None => h.clone(),
        }
    }
}

/// Forward pass over a row-major `steps x features` input, no validation.
pub(crate) fn forward_cached(
    params: &ModelParams,
    config: &ModelConfig,
    inputs: &[f64],
    mode: Mode,
    seed: u64,
) -> (Vec<f64>, ForwardCache) {
    let features = config.input_features;
    let steps = inputs.len() / features;
    let hidden = config.hidden_units;
    let dropout = mode == Mode::Train && config.dropout_rate > 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut layers: Vec<Vec<StepCache>> = Vec::with_capacity(params.layers.len());
    let mut masks = Vec::with_capacity(params.layers.len());
    for (l, p) in params.layers.iter().enumerate() {
        let mask = dropout.then(|| draw_mask(&mut rng, config.dropout_rate, hidden));
        let mut seq: Vec<StepCache> = Vec::with_capacity(steps);
        let zero = vec![0.0; hidden];
        for t in 0..steps {
            let below: Vec<f64>;
            let x: &[f64] = if l == 0 {
                &inputs[t * features..(t + 1) * features]
            } else {
                below = match &masks[l - 1] {
                    Some(m) => layers[l - 1][t]
                        .h
                        .iter()
                        .zip(m as &Vec<f64>)
                        .map(|(a, b)| a * b)
                        .collect(),
                    None => layers[l - 1][t].h.clone(),
                };
                &below
            };
            let (h_prev, c_prev) = match seq.last() {
                Some(prev) => (&prev.h[..], &prev.c[..]),
                None => (&zero[..], &zero[..]),
            };
            let out = step(p, x, h_prev, c_prev);
            seq.push(out);
        }
        layers.push(seq);
        masks.push(mask);
    }

    let last = layers.len() - 1;
    let top = match &masks[last] {
        Some(m) => layers[last][steps - 1].h.iter().zip(m).map(|(a, b)| a * b).collect(),
        None => layers[last][steps - 1].h.clone(),
    };
    let mut y = params.b_out.clone();
    params.w_out.mul_vec_add(&top, &mut y);
    (
        y,
        ForwardCache {
            steps,
            layers,
            masks,
            top,
        },
    )
}

pub(crate) fn check_inputs(config: &ModelConfig, inputs: &[f64], features: usize) -> Result<()> {
    if features != config.input_features {
        return Err(Error::Shape(format!(
            "sample has {features} features per step, model expects {}",
            config.input_features
        )));
    }
    if inputs.len() != config.lags * features {
        return Err(Error::Shape(format!(
            "sample has {} input values, model expects {} steps of {features}",
            inputs.len(),
            config.lags
        )));
    }
    if inputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("model input".into()));
    }
    Ok(())
}

fn check_params(params: &ModelParams, config: &ModelConfig) -> Result<()> {
    if !params.matches(config) {
        return Err(Error::Shape("parameters do not match the model configuration".into()));
    }
    Ok(())
}

/// Forecast `horizon` scaled values for one window. `seed` selects the
/// dropout masks in [`Mode::Train`] and is ignored in [`Mode::Infer`].
pub fn model_forward(
    params: &ModelParams,
    config: &ModelConfig,
    sample: &WindowSample,
    mode: Mode,
    seed: u64,
) -> Result<Vec<f64>> {
    check_params(params, config)?;
    check_inputs(config, &sample.inputs, sample.features)?;
    Ok(forward_cached(params, config, &sample.inputs, mode, seed).0)
}

/// Inference-mode forecast.
pub fn predict(params: &ModelParams, config: &ModelConfig, sample: &WindowSample) -> Result<Vec<f64>> {
    model_forward(params, config, sample, Mode::Infer, 0)
}

/// Mean of squared differences.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "prediction length {} vs target length {}",
            pred.len(),
            target.len()
        )));
    }
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}

#[cfg(test)]
pub(crate) mod tests {
    use chrono::{NaiveDate, TimeZone, Utc};

    use super::*;
    use crate::net::init_model;

    pub(crate) fn sample(steps: usize, features: usize, horizon: usize, seed: u64) -> WindowSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        WindowSample {
            inputs: (0..steps * features).map(|_| rng.random_range(-1.0..1.0)).collect(),
            features,
            target: (0..horizon).map(|_| rng.random_range(0.0..1.0)).collect(),
            forecast_date: NaiveDate::from_ymd_opt(2020, 1, 2).unwrap(),
            input_times: (0..steps).map(|i| start + chrono::Duration::hours(i as i64)).collect(),
            target_times: (0..horizon)
                .map(|i| start + chrono::Duration::hours((steps + i) as i64))
                .collect(),
        }
    }

    fn cfg(layers: usize, hidden: usize, dropout: f64) -> ModelConfig {
        ModelConfig {
            num_layers: layers,
            hidden_units: hidden,
            input_features: 3,
            lags: 6,
            horizon: 4,
            dropout_rate: dropout,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn zero_params_forecast_zero() {
        let c = cfg(2, 5, 0.5);
        let p = ModelParams::zeros(&c);
        let s = sample(6, 3, 4, 1);
        assert_eq!(predict(&p, &c, &s).unwrap(), vec![0.0; 4]);
        assert_eq!(model_forward(&p, &c, &s, Mode::Train, 9).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn zero_dropout_train_equals_infer() {
        let c = cfg(3, 6, 0.0);
        let p = init_model(&c, 4).unwrap();
        let s = sample(6, 3, 4, 2);
        let a = model_forward(&p, &c, &s, Mode::Train, 11).unwrap();
        let b = predict(&p, &c, &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn train_mode_is_seeded() {
        let c = cfg(2, 6, 0.5);
        let p = init_model(&c, 4).unwrap();
        let s = sample(6, 3, 4, 2);
        let a = model_forward(&p, &c, &s, Mode::Train, 11).unwrap();
        let b = model_forward(&p, &c, &s, Mode::Train, 11).unwrap();
        let d = model_forward(&p, &c, &s, Mode::Train, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, d);
    }

    #[test]
    fn dropout_expectation_matches_inference() {
        // single layer: output is linear in the dropped activation
        let c = cfg(1, 8, 0.5);
        let mut p = init_model(&c, 5).unwrap();
        p.b_out = vec![0.0; 4];
        let s = sample(6, 3, 4, 3);
        let infer = predict(&p, &c, &s).unwrap();
        let (_, cache) = forward_cached(&p, &c, &s.inputs, Mode::Infer, 0);
        let h = cache.layers[0][5].h.clone();
        let draws = 100_000u64;
        let mut sum_h = [0.0; 8];
        let mut sum_y = [0.0; 4];
        for k in 0..draws {
            let (y, cache) = forward_cached(&p, &c, &s.inputs, Mode::Train, sample_seed(77, k));
            for (a, b) in sum_h.iter_mut().zip(&cache.top) {
                *a += b;
            }
            for (a, b) in sum_y.iter_mut().zip(&y) {
                *a += b;
            }
        }
        for j in 0..8 {
            let mean = sum_h[j] / draws as f64;
            assert!((mean - h[j]).abs() <= 0.01 * h[j].abs(), "unit {j}: {mean} vs {}", h[j]);
        }
        for j in 0..4 {
            let mean = sum_y[j] / draws as f64;
            assert!((mean - infer[j]).abs() <= 0.01 * infer[j].abs().max(1e-3), "output {j}");
        }
    }

    #[test]
    fn mask_rate() {
        let m = dropout_mask(0.5, 10_000, 3);
        let kept = m.iter().filter(|v| **v == 2.0).count();
        assert!(m.iter().all(|v| *v == 0.0 || *v == 2.0));
        assert!((4800..5200).contains(&kept));
        assert_eq!(dropout_mask(0.0, 5, 1), vec![1.0; 5]);
    }

    #[test]
    fn output_layer_linearity() {
        let c = cfg(2, 5, 0.5);
        let mut p = init_model(&c, 8).unwrap();
        p.b_out = vec![0.0; 4];
        let s = sample(6, 3, 4, 6);
        let y1 = predict(&p, &c, &s).unwrap();
        for w in &mut p.w_out.data {
            *w *= 2.0;
        }
        let y2 = predict(&p, &c, &s).unwrap();
        for (a, b) in y1.iter().zip(&y2) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn mse_definition() {
        assert_eq!(mse_loss(&[0.5; 24], &[0.5; 24]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[1.0; 24], &[0.0; 24]).unwrap(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p: Vec<f64> = (0..24).map(|_| rng.random_range(-2.0..2.0)).collect();
        let t: Vec<f64> = (0..24).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut brute = 0.0;
        for i in 0..24 {
            brute += (p[i] - t[i]).powi(2) / 24.0;
        }
        assert!((mse_loss(&p, &t).unwrap() - brute).abs() < 1e-15);
        assert!(mse_loss(&p, &t[..23]).is_err());
    }

    #[test]
    fn shape_errors() {
        let c = cfg(1, 4, 0.0);
        let p = init_model(&c, 1).unwrap();
        assert!(matches!(predict(&p, &c, &sample(6, 2, 4, 1)), Err(Error::Shape(_))));
        assert!(matches!(predict(&p, &c, &sample(5, 3, 4, 1)), Err(Error::Shape(_))));
        let other = cfg(1, 5, 0.0);
        assert!(matches!(predict(&p, &other, &sample(6, 3, 4, 1)), Err(Error::Shape(_))));
    }
}
