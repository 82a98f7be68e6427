//! The LSTM forecaster: parameters, forward pass, exact gradients by
//! backpropagation through time, ADAM with per-tensor freezing, and
//! checkpoint files.
//!
//! The default cell follows the gate equations used by the forecasting
//! model this crate reproduces:
//!
//! ```text
//! i_t = sigmoid(W_xi x_t + W_hi h_{t-1} + b_i1) * tanh(W_xi x_t + W_hi h_{t-1} + b_i2)
//! f_t = sigmoid(W_xf x_t + W_hf h_{t-1} + b_f)
//! o_t = sigmoid(W_xo x_t + W_ho h_{t-1} + b_o)
//! c_t = f_t * c_{t-1} + i_t
//! h_t = o_t * tanh(c_t)
//! ```
//!
//! Note the input branch shares its weights between the sigmoid and tanh
//! factors and there is no separate candidate activation. A conventional
//! cell ([`CellVariant::Standard`]) is available for comparison.
//!
//! All arithmetic is `f64`.

mod adam;
mod backward;
mod cell;
mod checkpoint;
mod config;
mod linalg;
mod model;
mod params;

pub use adam::{adam_step, clip_global_norm, AdamHyper, OptimizerState};
pub use backward::{backward, backward_weighted, Gradients};
pub use cell::{lstm_cell_forward, CellState};
pub use checkpoint::{load_model, save_model, Checkpoint, CHECKPOINT_VERSION};
pub use config::{CellVariant, ModelConfig};
pub use linalg::Matrix;
pub use model::{dropout_mask, model_forward, mse_loss, predict, sample_seed, Mode};
pub use params::{init_model, CandidateParams, LstmLayerParams, ModelParams};
