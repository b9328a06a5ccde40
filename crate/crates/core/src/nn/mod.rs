//! A small self-contained deep-learning stack: 1-D convolutions, stacked
//! bidirectional LSTMs, dense layers, analytic gradients, Adam and binary
//! checkpoints. All arithmetic is f64.

pub mod adam;
pub mod checkpoint;
pub mod config;
pub mod layers;
pub mod lstm;
pub mod network;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{Head, NetworkConfig};
pub use layers::{conv1d_forward, dense, dropout, Activation};
pub use lstm::{bilstm_layer, lstm_cell_step, LstmWeights};
pub use network::{forward, loss_and_gradients, predict_many, Example, Loss, Mode, ModelParameters};
pub use tensor::Tensor;
