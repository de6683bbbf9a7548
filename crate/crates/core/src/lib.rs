//! Mean-centered pre-quantization transforms for linear layers.
//!
//! The crate implements per-channel centering, static channel scaling and
//! orthonormal Hadamard rotation of linear-layer inputs, folds the inverse
//! transforms into the weights and bias, and measures the effect of integer
//! fake quantization in SQNR on synthetic data and a toy transformer block.
//!
//! - [`tensor`]: dense `f64` matrices and channel statistics
//! - [`fwht`]: fast Walsh-Hadamard transform with a dense oracle
//! - [`transforms`]: transform plans, weight fusion and bias correction
//! - [`quant`]: per-token and blocked fake quantizers
//! - [`layersim`]: quantized linear sites and the toy block
//! - [`metrics`]: SQNR, error reports, whitening diagnostics
//! - [`harness`]: configs, synthetic data, calibration, experiments, reports, tensor I/O

pub mod error;
pub mod fwht;
pub mod harness;
pub mod layersim;
pub mod metrics;
pub mod quant;
pub mod rng;
pub mod tensor;
pub mod transforms;

pub use error::{Error, Result};
pub use fwht::{fwht_rows, fwht_vector, naive_hadamard, HadamardSize};
pub use layersim::{run_baseline, run_quantized, LinearLayer, QuantSite, SiteId, ToyDiTBlock};
pub use metrics::{error_report, sqnr, whitening_score, ErrorReport};
pub use quant::{dequantize, fake_quant, quantize_activations, quantize_weights_blocked, QuantConfig, QuantizedTensor};
pub use tensor::{channel_absmax, channel_means, channel_stats, matmul, ChannelStats, Tensor2D};
pub use transforms::{
    compute_sigma, effective_bias, forward_transform, fuse_weights, preset_to_plan, TransformPlan, TransformPreset,
};

/// Crate version string stamped into every report row.
pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), "-", env!("CARGO_PKG_VERSION"));
