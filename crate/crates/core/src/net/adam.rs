use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// ADAM moments plus a freeze flag per parameter tensor (in the order of
/// [`ModelParams::tensors`]).
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
    pub hyper: AdamHyper,
    pub frozen: Vec<bool>,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        Self::with_hyper(params, AdamHyper::default())
    }

    pub fn with_hyper(params: &ModelParams, hyper: AdamHyper) -> Self {
        let mut m = params.clone();
        for t in m.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        OptimizerState {
            v: m.clone(),
            frozen: vec![false; m.tensors().len()],
            m,
            step: 0,
            hyper,
        }
    }

    /// Freeze every tensor of LSTM layer `layer`.
    pub fn freeze_layer(&mut self, layer: usize) {
        for i in self.m.layer_tensor_indices(layer) {
            self.frozen[i] = true;
        }
    }
}

/// One ADAM update with bias correction. Frozen tensors and their moments are
/// left untouched.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut OptimizerState,
    learning_rate: f64,
) -> Result<()> {
    let n = state.frozen.len();
    if params.tensors().len() != n || grads.tensors().len() != n || params.param_count() != state.m.param_count() {
        return Err(Error::Shape("optimizer state does not match parameters".into()));
    }
    state.step += 1;
    let AdamHyper { beta1, beta2, epsilon } = state.hyper;
    let bc1 = 1.0 - beta1.powi(state.step as i32);
    let bc2 = 1.0 - beta2.powi(state.step as i32);
    let grads = grads.tensors();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for ((((p, g), m), v), frozen) in params
        .tensors_mut()
        .into_iter()
        .zip(grads)
        .zip(ms)
        .zip(vs)
        .zip(&state.frozen)
    {
        if *frozen {
            continue;
        }
        for i in 0..p.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

/// Rescale `grads` so their joint L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut ModelParams, max_norm: f64) -> f64 {
    let norm = grads
        .tensors()
        .iter()
        .flat_map(|t| t.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for t in grads.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= scale);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_model, ModelConfig};

    fn cfg() -> ModelConfig {
        ModelConfig {
            num_layers: 2,
            hidden_units: 3,
            input_features: 2,
            horizon: 2,
            ..ModelConfig::default()
        }
    }

    fn filled(p: &ModelParams, value: f64) -> ModelParams {
        let mut g = p.clone();
        for t in g.tensors_mut() {
            t.iter_mut().for_each(|v| *v = value);
        }
        g
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = init_model(&cfg(), 1).unwrap();
        let before = p.clone();
        let mut st = OptimizerState::new(&p);
        adam_step(&mut p, &filled(&before, 0.0), &mut st, 1e-3).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = filled(&ModelParams::zeros(&cfg()), 1.0);
        let g = filled(&p, 0.5);
        let mut st = OptimizerState::new(&p);
        adam_step(&mut p, &g, &mut st, 1e-3).unwrap();
        let expect = 1.0 - 1e-3 * 0.5 / (0.5 + 1e-8);
        for v in p.flatten() {
            assert!((v - expect).abs() < 1e-15);
            assert!((v - 0.999).abs() < 1e-10);
        }
    }

    #[test]
    fn frozen_layer_is_bitwise_invariant() {
        let mut p = init_model(&cfg(), 2).unwrap();
        let first = p.layers[0].clone();
        let second = p.layers[1].clone();
        let mut st = OptimizerState::new(&p);
        st.freeze_layer(0);
        for k in 0..100 {
            let g = filled(&p, 0.3 * ((k % 5) as f64 - 2.0) + 0.01);
            adam_step(&mut p, &g, &mut st, 1e-2).unwrap();
        }
        assert_eq!(p.layers[0], first);
        assert_ne!(p.layers[1], second);
        let bits = |t: &[f64]| t.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        for (a, b) in p.tensors()[..10].iter().zip(init_model(&cfg(), 2).unwrap().tensors()) {
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn clipping() {
        let mut g = filled(&ModelParams::zeros(&cfg()), 1.0);
        let n = g.param_count() as f64;
        let norm = clip_global_norm(&mut g, 5.0);
        assert!((norm - n.sqrt()).abs() < 1e-12);
        let after: f64 = g.flatten().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((after - 5.0).abs() < 1e-12);
        let mut small = filled(&g, 1e-3);
        let before = small.clone();
        clip_global_norm(&mut small, 5.0);
        assert_eq!(small, before);
    }
}
