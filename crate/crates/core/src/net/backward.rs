use rayon::prelude::*;

use super::config::ModelConfig;
use super::model::{check_inputs, forward_cached, sample_seed, ForwardCache, Mode};
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::series::WindowSample;

/// Samples per reduction chunk. Fixed so the summation order, and therefore
/// every bit of the result, does not depend on the thread count.
const CHUNK: usize = 8;

/// Loss gradients, shaped like the model parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub grads: ModelParams,
    pub loss: f64,
}

/// Gradient of the mean per-sample MSE over `batch`. Sample `k` of the batch
/// draws its dropout masks from `sample_seed(seed, k)`.
pub fn backward(params: &ModelParams, config: &ModelConfig, batch: &[WindowSample], seed: u64) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(Error::Precondition("gradient of an empty batch".into()));
    }
    let w = vec![1.0 / batch.len() as f64; batch.len()];
    backward_weighted(params, config, batch, &w, seed)
}

/// Gradient of `sum_k weights[k] * mse_k`.
pub fn backward_weighted(
    params: &ModelParams,
    config: &ModelConfig,
    batch: &[WindowSample],
    weights: &[f64],
    seed: u64,
) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(Error::Precondition("gradient of an empty batch".into()));
    }
    if weights.len() != batch.len() {
        return Err(Error::Shape(format!(
            "{} weights for {} samples",
            weights.len(),
            batch.len()
        )));
    }
    if !params.matches(config) {
        return Err(Error::Shape("parameters do not match the model configuration".into()));
    }
    for s in batch {
        check_inputs(config, &s.inputs, s.features)?;
        if s.target.len() != config.horizon {
            return Err(Error::Shape(format!(
                "target has {} values, model forecasts {}",
                s.target.len(),
                config.horizon
            )));
        }
    }

    let indices: Vec<usize> = (0..batch.len()).collect();
    let partials: Vec<Result<(ModelParams, f64)>> = indices
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = ModelParams::zeros(config);
            let mut loss = 0.0;
            for &k in chunk {
                loss += sample_backward(
                    params,
                    config,
                    &batch[k],
                    weights[k],
                    sample_seed(seed, k as u64),
                    &mut g,
                )?;
            }
            Ok((g, loss))
        })
        .collect();

    let mut total = ModelParams::zeros(config);
    let mut loss = 0.0;
    for part in partials {
        let (g, l) = part?;
        for (dst, src) in total.tensors_mut().into_iter().zip(g.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
        loss += l;
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("batch loss".into()));
    }
    for (l, _) in params.layers.iter().enumerate() {
        let range = total.layer_tensor_indices(l);
        if total.tensors()[range].iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(format!("gradient of LSTM layer {l}")));
        }
    }
    Ok(Gradients { grads: total, loss })
}

fn sample_backward(
    params: &ModelParams,
    config: &ModelConfig,
    sample: &WindowSample,
    weight: f64,
    seed: u64,
    g: &mut ModelParams,
) -> Result<f64> {
    let (y, cache) = forward_cached(params, config, &sample.inputs, Mode::Train, seed);
    for (l, seq) in cache.layers.iter().enumerate() {
        if seq.iter().any(|s| s.h.iter().chain(&s.c).any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(format!("activations of LSTM layer {l}")));
        }
    }
    let horizon = y.len() as f64;
    let mut loss = 0.0;
    let dy: Vec<f64> = y
        .iter()
        .zip(&sample.target)
        .map(|(p, t)| {
            loss += (p - t) * (p - t);
            weight * 2.0 * (p - t) / horizon
        })
        .collect();
    if !loss.is_finite() {
        return Err(Error::NonFinite("output layer".into()));
    }

    g.w_out.add_outer(&dy, &cache.top);
    for (b, d) in g.b_out.iter_mut().zip(&dy) {
        *b += d;
    }
    let hidden = config.hidden_units;
    let steps = cache.steps;
    let top = params.layers.len() - 1;

    // gradient flowing into each layer's output sequence, after its mask
    let mut dh_seq = vec![vec![0.0; hidden]; steps];
    params.w_out.mul_t_vec_add(&dy, &mut dh_seq[steps - 1]);
    apply_mask(&cache, top, &mut dh_seq[steps - 1]);

    for l in (0..=top).rev() {
        dh_seq = layer_backward(params, config, &cache, &sample.inputs, l, dh_seq, g);
    }
    Ok(weight * loss / horizon)
}

fn apply_mask(cache: &ForwardCache, layer: usize, v: &mut [f64]) {
    if let Some(m) = &cache.masks[layer] {
        for (a, b) in v.iter_mut().zip(m) {
            *a *= b;
        }
    }
}

/// Backpropagate through layer `l` given the gradient with respect to its
/// (masked) output at every step. Returns the same for the layer below.
fn layer_backward(
    params: &ModelParams,
    config: &ModelConfig,
    cache: &ForwardCache,
    inputs: &[f64],
    l: usize,
    dh_seq: Vec<Vec<f64>>,
    g: &mut ModelParams,
) -> Vec<Vec<f64>> {
    let p = &params.layers[l];
    let gl = &mut g.layers[l];
    let n = config.hidden_units;
    let features = config.input_features;
    let steps = cache.steps;
    let seq = &cache.layers[l];
    let zero = vec![0.0; n];

    let mut below = if l > 0 { vec![vec![0.0; n]; steps] } else { Vec::new() };
    let mut dh_next = vec![0.0; n];
    let mut dc_next = vec![0.0; n];
    let mut dzs = vec![0.0; n];
    let mut dzg = vec![0.0; n];
    let mut dzf = vec![0.0; n];
    let mut dzo = vec![0.0; n];
    let mut da = vec![0.0; n];

    for t in (0..steps).rev() {
        let s = &seq[t];
        let (h_prev, c_prev) = if t > 0 {
            (&seq[t - 1].h, &seq[t - 1].c)
        } else {
            (&zero, &zero)
        };
        for j in 0..n {
            let dh = dh_seq[t][j] + dh_next[j];
            let d_o = dh * s.tc[j];
            let dc = dh * s.o[j] * (1.0 - s.tc[j] * s.tc[j]) + dc_next[j];
            let df = dc * c_prev[j];
            dzs[j] = dc * s.g[j] * s.s[j] * (1.0 - s.s[j]);
            dzg[j] = dc * s.s[j] * (1.0 - s.g[j] * s.g[j]);
            dzf[j] = df * s.f[j] * (1.0 - s.f[j]);
            dzo[j] = d_o * s.o[j] * (1.0 - s.o[j]);
            dc_next[j] = dc * s.f[j];
        }

        let x_owned;
        let x: &[f64] = if l == 0 {
            &inputs[t * features..(t + 1) * features]
        } else {
            x_owned = cache.layer_output(l - 1, t);
            &x_owned
        };

        // the sigmoid and tanh factors share W_xi/W_hi in the default cell
        let di: &[f64] = match &p.candidate {
            None => {
                for j in 0..n {
                    da[j] = dzs[j] + dzg[j];
                }
                &da
            }
            Some(_) => &dzs,
        };
        gl.w_xi.add_outer(di, x);
        gl.w_hi.add_outer(di, h_prev);
        gl.w_xf.add_outer(&dzf, x);
        gl.w_hf.add_outer(&dzf, h_prev);
        gl.w_xo.add_outer(&dzo, x);
        gl.w_ho.add_outer(&dzo, h_prev);
        for j in 0..n {
            gl.b_i1[j] += dzs[j];
            gl.b_i2[j] += dzg[j];
            gl.b_f[j] += dzf[j];
            gl.b_o[j] += dzo[j];
        }
        if let Some(gc) = &mut gl.candidate {
            gc.w_xg.add_outer(&dzg, x);
            gc.w_hg.add_outer(&dzg, h_prev);
        }

        dh_next.iter_mut().for_each(|v| *v = 0.0);
        p.w_hi.mul_t_vec_add(di, &mut dh_next);
        p.w_hf.mul_t_vec_add(&dzf, &mut dh_next);
        p.w_ho.mul_t_vec_add(&dzo, &mut dh_next);
        if let Some(cand) = &p.candidate {
            cand.w_hg.mul_t_vec_add(&dzg, &mut dh_next);
        }

        if l > 0 {
            let dx = &mut below[t];
            p.w_xi.mul_t_vec_add(di, dx);
            p.w_xf.mul_t_vec_add(&dzf, dx);
            p.w_xo.mul_t_vec_add(&dzo, dx);
            if let Some(cand) = &p.candidate {
                cand.w_xg.mul_t_vec_add(&dzg, dx);
            }
            apply_mask(cache, l - 1, dx);
        }
    }
    below
}
