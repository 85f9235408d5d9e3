//! The three forecasting architectures, their training loop, and
//! checkpoints.
//!
//! Every model maps a batch of windows `[B, T, H, W, 1]` to next frames
//! `[B, H, W, 1]` through a sigmoid head:
//!
//! ```text
//! stack_lstm  flatten → (LSTM → BN → dropout) × 3 → dense → frame
//! cnn_lstm    conv(relu) → pool → flatten → LSTM × 2 → dense → frame
//! conv_lstm   (ConvLSTM → BN → dropout) × 3 → 1×1 conv → frame
//! ```
//!
//! Stacked recurrent layers pass full state sequences upward; only the last
//! one reduces to its final state.

mod checkpoint;
mod config;
mod layer;
mod network;
mod train;

pub use checkpoint::{load_checkpoint, load_weights, read_checkpoint_config, save_checkpoint};
pub use config::{Architecture, ModelConfig};
pub use layer::Layer;
pub use network::{build_model, model_forward, Model, Tape};
pub use train::{batch_ranges, fit, fit_with, predict_all, predict_next, TrainReport};
