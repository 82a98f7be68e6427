use super::linalg::sigmoid;
use super::params::LstmLayerParams;
use crate::error::{Error, Result};

/// Hidden (short-term) and cell (long-term) state of one LSTM layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(hidden: usize) -> Self {
        CellState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Activations of one cell step, kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    /// Sigmoid factor of the input branch.
    pub s: Vec<f64>,
    /// Tanh factor of the input branch (the candidate in the standard cell).
    pub g: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    /// `tanh(c)`
    pub tc: Vec<f64>,
    pub h: Vec<f64>,
}

/// One step of a layer without shape or finiteness checks.
pub(crate) fn step(p: &LstmLayerParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache {
    let n = p.hidden();
    let mut a = vec![0.0; n];
    p.w_xi.mul_vec_add(x, &mut a);
    p.w_hi.mul_vec_add(h_prev, &mut a);
    let mut zf = p.b_f.clone();
    p.w_xf.mul_vec_add(x, &mut zf);
    p.w_hf.mul_vec_add(h_prev, &mut zf);
    let mut zo = p.b_o.clone();
    p.w_xo.mul_vec_add(x, &mut zo);
    p.w_ho.mul_vec_add(h_prev, &mut zo);

    let s: Vec<f64> = a.iter().zip(&p.b_i1).map(|(a, b)| sigmoid(a + b)).collect();
    let g: Vec<f64> = match &p.candidate {
        None => a.iter().zip(&p.b_i2).map(|(a, b)| (a + b).tanh()).collect(),
        Some(cand) => {
            let mut zg = p.b_i2.clone();
            cand.w_xg.mul_vec_add(x, &mut zg);
            cand.w_hg.mul_vec_add(h_prev, &mut zg);
            zg.iter().map(|z| z.tanh()).collect()
        }
    };
    let f: Vec<f64> = zf.into_iter().map(sigmoid).collect();
    let o: Vec<f64> = zo.into_iter().map(sigmoid).collect();
    let c: Vec<f64> = (0..n).map(|j| f[j] * c_prev[j] + s[j] * g[j]).collect();
    let tc: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = (0..n).map(|j| o[j] * tc[j]).collect();
    StepCache { s, g, f, o, c, tc, h }
}

/// Advance one layer by one time step, returning the new `(h, c)`.
pub fn lstm_cell_forward(x: &[f64], state: &CellState, params: &LstmLayerParams) -> Result<CellState> {
    let n = params.hidden();
    if x.len() != params.input() {
        return Err(Error::Shape(format!(
            "cell input has {} features, layer expects {}",
            x.len(),
            params.input()
        )));
    }
    if state.h.len() != n || state.c.len() != n {
        return Err(Error::Shape(format!(
            "cell state sized ({}, {}), layer has {n} units",
            state.h.len(),
            state.c.len()
        )));
    }
    if x.iter().chain(&state.h).chain(&state.c).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cell input".into()));
    }
    let out = step(params, x, &state.h, &state.c);
    Ok(CellState { h: out.h, c: out.c })
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)] // oracles index like the equations
mod tests {
    use super::*;
    use crate::net::{init_model, CellVariant, ModelConfig};

    fn layer(hidden: usize, input: usize, seed: u64) -> LstmLayerParams {
        let cfg = ModelConfig {
            num_layers: 1,
            hidden_units: hidden,
            input_features: input,
            horizon: 1,
            ..ModelConfig::default()
        };
        let mut p = init_model(&cfg, seed).unwrap().layers.remove(0);
        // non-zero biases so every term is exercised
        for (k, b) in [&mut p.b_i1, &mut p.b_i2, &mut p.b_f, &mut p.b_o]
            .into_iter()
            .enumerate()
        {
            for (j, v) in b.iter_mut().enumerate() {
                *v = 0.1 * (k as f64 + 1.0) - 0.07 * j as f64;
            }
        }
        p
    }

    // Straight-line per-unit evaluation, written independently of `step`.
    fn scalar_oracle(p: &LstmLayerParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = h.len();
        let mut h_new = vec![0.0; n];
        let mut c_new = vec![0.0; n];
        for j in 0..n {
            let mut a = 0.0;
            let mut zf = p.b_f[j];
            let mut zo = p.b_o[j];
            for k in 0..x.len() {
                a += p.w_xi.get(j, k) * x[k];
                zf += p.w_xf.get(j, k) * x[k];
                zo += p.w_xo.get(j, k) * x[k];
            }
            for k in 0..n {
                a += p.w_hi.get(j, k) * h[k];
                zf += p.w_hf.get(j, k) * h[k];
                zo += p.w_ho.get(j, k) * h[k];
            }
            let i = 1.0 / (1.0 + (-(a + p.b_i1[j])).exp()) * (a + p.b_i2[j]).tanh();
            let f = 1.0 / (1.0 + (-zf).exp());
            let o = 1.0 / (1.0 + (-zo).exp());
            c_new[j] = f * c[j] + i;
            h_new[j] = o * c_new[j].tanh();
        }
        (h_new, c_new)
    }

    #[test]
    fn matches_scalar_oracle() {
        for seed in 0..5 {
            let p = layer(4, 3, seed);
            let x = [0.3, -1.2, 0.8];
            let state = CellState {
                h: vec![0.1, -0.2, 0.3, -0.4],
                c: vec![0.5, -0.6, 1.5, 0.0],
            };
            let out = lstm_cell_forward(&x, &state, &p).unwrap();
            let (h, c) = scalar_oracle(&p, &x, &state.h, &state.c);
            for j in 0..4 {
                assert!((out.h[j] - h[j]).abs() < 1e-12);
                assert!((out.c[j] - c[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_params_from_zero_state() {
        let p = LstmLayerParams::zeros(3, 2, CellVariant::PaperFaithful);
        let out = lstm_cell_forward(&[1.0, 2.0, 3.0], &CellState::zeros(2), &p).unwrap();
        assert_eq!(out.h, vec![0.0, 0.0]);
        assert_eq!(out.c, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_params_geometric_decay() {
        let p = LstmLayerParams::zeros(2, 3, CellVariant::PaperFaithful);
        let c0 = [2.0, -0.7, 1e-3];
        let mut state = CellState {
            h: vec![0.0; 3],
            c: c0.to_vec(),
        };
        for t in 1..=50 {
            state = lstm_cell_forward(&[0.4, -0.9], &state, &p).unwrap();
            for j in 0..3 {
                let expect = 0.5f64.powi(t) * c0[j];
                assert!((state.c[j] - expect).abs() <= 1e-14 * c0[j].abs().max(1.0), "t={t}");
                assert!((state.h[j] - 0.5 * expect.tanh()).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn standard_variant_uses_candidate() {
        let mut p = LstmLayerParams::zeros(1, 1, CellVariant::Standard);
        p.b_i2[0] = 1.0;
        // i = sigmoid(0) = 0.5, g = tanh(1)
        let out = lstm_cell_forward(&[0.0], &CellState::zeros(1), &p).unwrap();
        assert!((out.c[0] - 0.5 * 1f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        let p = LstmLayerParams::zeros(3, 2, CellVariant::PaperFaithful);
        assert!(matches!(
            lstm_cell_forward(&[1.0], &CellState::zeros(2), &p),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            lstm_cell_forward(&[1.0, 2.0, 3.0], &CellState::zeros(4), &p),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            lstm_cell_forward(&[f64::NAN, 2.0, 3.0], &CellState::zeros(2), &p),
            Err(Error::NonFinite(_))
        ));
    }
}
