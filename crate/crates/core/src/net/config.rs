use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellVariant {
    /// Shared input-branch weights with two biases, no candidate activation.
    PaperFaithful,
    /// Conventional LSTM with a separate tanh candidate.
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub num_layers: usize,
    /// Units in every LSTM layer.
    pub hidden_units: usize,
    pub input_features: usize,
    pub lags: usize,
    /// Number of linear output units.
    pub horizon: usize,
    pub dropout_rate: f64,
    pub cell_variant: CellVariant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            num_layers: 3,
            hidden_units: 400,
            input_features: 3,
            lags: 24,
            horizon: 24,
            dropout_rate: 0.5,
            cell_variant: CellVariant::PaperFaithful,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("num_layers", self.num_layers),
            ("hidden_units", self.hidden_units),
            ("input_features", self.input_features),
            ("lags", self.lags),
            ("horizon", self.horizon),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("model {name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Input width of LSTM layer `layer`.
    pub fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_features
        } else {
            self.hidden_units
        }
    }
}
