use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{CellVariant, ModelConfig};
use super::linalg::Matrix;
use crate::error::Result;

/// Candidate-branch weights, present only in the standard cell. Its bias is
/// `b_i2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateParams {
    pub w_xg: Matrix,
    pub w_hg: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayerParams {
    pub w_xi: Matrix,
    pub w_hi: Matrix,
    pub b_i1: Vec<f64>,
    pub b_i2: Vec<f64>,
    pub w_xf: Matrix,
    pub w_hf: Matrix,
    pub b_f: Vec<f64>,
    pub w_xo: Matrix,
    pub w_ho: Matrix,
    pub b_o: Vec<f64>,
    pub candidate: Option<CandidateParams>,
}

impl LstmLayerParams {
    pub fn zeros(input: usize, hidden: usize, variant: CellVariant) -> Self {
        let wx = || Matrix::zeros(hidden, input);
        let wh = || Matrix::zeros(hidden, hidden);
        LstmLayerParams {
            w_xi: wx(),
            w_hi: wh(),
            b_i1: vec![0.0; hidden],
            b_i2: vec![0.0; hidden],
            w_xf: wx(),
            w_hf: wh(),
            b_f: vec![0.0; hidden],
            w_xo: wx(),
            w_ho: wh(),
            b_o: vec![0.0; hidden],
            candidate: (variant == CellVariant::Standard).then(|| CandidateParams { w_xg: wx(), w_hg: wh() }),
        }
    }

    pub fn hidden(&self) -> usize {
        self.b_f.len()
    }

    pub fn input(&self) -> usize {
        self.w_xf.cols
    }

    pub fn variant(&self) -> CellVariant {
        if self.candidate.is_some() {
            CellVariant::Standard
        } else {
            CellVariant::PaperFaithful
        }
    }

    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut v: Vec<(&'static str, &[f64])> = vec![
            ("w_xi", &self.w_xi.data),
            ("w_hi", &self.w_hi.data),
            ("b_i1", &self.b_i1),
            ("b_i2", &self.b_i2),
            ("w_xf", &self.w_xf.data),
            ("w_hf", &self.w_hf.data),
            ("b_f", &self.b_f),
            ("w_xo", &self.w_xo.data),
            ("w_ho", &self.w_ho.data),
            ("b_o", &self.b_o),
        ];
        if let Some(c) = &self.candidate {
            v.push(("w_xg", &c.w_xg.data));
            v.push(("w_hg", &c.w_hg.data));
        }
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut v = vec![
            &mut self.w_xi.data,
            &mut self.w_hi.data,
            &mut self.b_i1,
            &mut self.b_i2,
            &mut self.w_xf.data,
            &mut self.w_hf.data,
            &mut self.b_f,
            &mut self.w_xo.data,
            &mut self.w_ho.data,
            &mut self.b_o,
        ];
        if let Some(c) = &mut self.candidate {
            v.push(&mut c.w_xg.data);
            v.push(&mut c.w_hg.data);
        }
        v
    }
}

/// Trainable parameters: the LSTM stack plus the linear readout
/// (`horizon x hidden` weights and `horizon` biases).
///
/// Also used as the container for gradients and ADAM moments, which share
/// its shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub layers: Vec<LstmLayerParams>,
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        ModelParams {
            layers: (0..config.num_layers)
                .map(|l| LstmLayerParams::zeros(config.layer_input(l), config.hidden_units, config.cell_variant))
                .collect(),
            w_out: Matrix::zeros(config.horizon, config.hidden_units),
            b_out: vec![0.0; config.horizon],
        }
    }

    /// Every tensor in a fixed order, with a `layer<k>.<name>` label.
    pub fn named_tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            for (name, t) in layer.tensors() {
                out.push((format!("layer{k}.{name}"), t));
            }
        }
        out.push(("out.w".to_string(), &self.w_out.data));
        out.push(("out.b".to_string(), &self.b_out));
        out
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = Vec::new();
        for layer in &mut self.layers {
            out.extend(layer.tensors_mut());
        }
        out.push(&mut self.w_out.data);
        out.push(&mut self.b_out);
        out
    }

    /// Indices (into [`Self::tensors`]) of the tensors of LSTM layer `layer`.
    pub fn layer_tensor_indices(&self, layer: usize) -> std::ops::Range<usize> {
        let start: usize = self.layers[..layer].iter().map(|l| l.tensors().len()).sum();
        start..start + self.layers[layer].tensors().len()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// All parameters concatenated in tensor order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    /// Inverse of [`Self::flatten`] for a model of this shape.
    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut pos = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[pos..pos + n]);
            pos += n;
        }
        assert_eq!(pos, flat.len(), "flat parameter length");
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Whether this parameter set fits `config`.
    pub fn matches(&self, config: &ModelConfig) -> bool {
        self.layers.len() == config.num_layers
            && self.layers.iter().enumerate().all(|(l, p)| {
                p.hidden() == config.hidden_units
                    && p.input() == config.layer_input(l)
                    && p.variant() == config.cell_variant
            })
            && self.w_out.rows == config.horizon
            && self.w_out.cols == config.hidden_units
    }
}

/// Weights uniform in `[-1/sqrt(hidden), 1/sqrt(hidden)]`, biases zero. The
/// same seed always gives bitwise-identical parameters.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut params = ModelParams::zeros(config);
    let bound = 1.0 / (config.hidden_units as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
    for (name, t) in names.iter().zip(params.tensors_mut()) {
        let is_bias = name.rsplit('.').next().is_some_and(|n| n.starts_with('b'));
        if !is_bias {
            for v in t.iter_mut() {
                *v = rng.random_range(-bound..=bound);
            }
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            num_layers: 2,
            hidden_units: 5,
            input_features: 3,
            horizon: 4,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn init_is_seeded() {
        let a = init_model(&small(), 7).unwrap();
        let b = init_model(&small(), 7).unwrap();
        let c = init_model(&small(), 8).unwrap();
        assert_eq!(
            a.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_ne!(a.flatten(), c.flatten());
    }

    #[test]
    fn init_bounds_and_zero_biases() {
        let p = init_model(&small(), 1).unwrap();
        let bound = 1.0 / 5f64.sqrt();
        for (name, t) in p.named_tensors() {
            if name.ends_with(".b") || name.contains(".b_") {
                assert!(t.iter().all(|v| *v == 0.0), "{name}");
            } else {
                assert!(t.iter().all(|v| v.abs() <= bound), "{name}");
            }
        }
    }

    #[test]
    fn zero_layers_rejected() {
        let cfg = ModelConfig {
            num_layers: 0,
            ..small()
        };
        assert!(init_model(&cfg, 0).is_err());
    }

    #[test]
    fn parameter_count() {
        let p = ModelParams::zeros(&small());
        // layer0: 3*(5*3 + 5*5) + 4*5 ; layer1: 3*(5*5 + 5*5) + 4*5 ; out: 4*5 + 4
        assert_eq!(p.param_count(), (3 * 40 + 20) + (3 * 50 + 20) + 24);
        assert_eq!(p.layer_tensor_indices(1), 10..20);
        let std = ModelParams::zeros(&ModelConfig {
            cell_variant: CellVariant::Standard,
            ..small()
        });
        assert_eq!(std.layer_tensor_indices(1), 12..24);
    }

    #[test]
    fn flatten_round_trip() {
        let p = init_model(&small(), 3).unwrap();
        let mut q = ModelParams::zeros(&small());
        q.assign_flat(&p.flatten());
        assert_eq!(p, q);
        assert!(q.matches(&small()));
    }
}
