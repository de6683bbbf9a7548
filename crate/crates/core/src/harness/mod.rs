//! Experiment harness: configuration, synthetic data, alpha calibration,
//! studies, reports and tensor file I/O.

pub mod bench;
pub mod calibrate;
pub mod config;
pub mod experiments;
pub mod io;
pub mod report;
pub mod selftest;
pub mod synth;

pub use calibrate::{calibrate_alpha, calibrate_alpha_with, default_alpha_grid, AlphaCalibration};
pub use config::{AlphaSpec, ExperimentConfig, OutputFormat, Overrides};
pub use experiments::{channel_study, run_ablation, run_calibration, run_end2end_toy, ChannelStudy, ResultRow};
pub use io::{load_tensor, save_tensor};
pub use synth::{four_channel_spec, gen_synthetic, ChannelGenSpec, Tail};
