//! Gradient-free training of quantized neural networks.
//!
//! Quantized layers hold small integer weights in `[-I, I]` and are trained
//! by flipping selected weights by ±1, steered by an integer tally of error
//! signs; full-precision layers in the same stack are trained by backprop
//! with AdamW. The crate also carries an energy and storage ledger for
//! optimizer steps and an executable 3-SAT reduction showing that
//! ±1-separability is NP-complete.

pub mod accounting;
pub mod arch;
pub mod backprop;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod forward;
pub mod gft;
pub mod hardness;
pub mod loss;
pub mod matrix;
pub mod metrics;
pub mod network;
pub mod quant;
pub mod rng;
pub mod trainer;

pub use error::{CheckpointError, Error, IdxError, Result};
pub use gft::ErrorFilterMode;
pub use loss::LossKind;
pub use matrix::FloatMatrix;
pub use network::{build_network, Activation, LayerKind, LayerSpec, Network};
pub use quant::{BitWidth, QuantizedWeightMatrix};
pub use trainer::{train, TrainConfig, TrainState};
