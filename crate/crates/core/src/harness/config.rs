//! Experiment configuration: TOML file plus command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::calibrate::default_alpha_grid;
use crate::harness::synth::{default_image_spec, default_text_spec, ChannelGenSpec};
use crate::layersim::{BlockParams, SiteSpec};
use crate::quant::DEFAULT_WEIGHT_BLOCK;
use crate::transforms::{TransformPreset, DEFAULT_EPSILON};

/// A fixed migration strength or a grid searched on calibration data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Fixed(f64),
    Grid(Vec<f64>),
}

impl AlphaSpec {
    pub fn grid(&self) -> Vec<f64> {
        match self {
            AlphaSpec::Fixed(a) => vec![*a],
            AlphaSpec::Grid(g) => g.clone(),
        }
    }
}

impl Default for AlphaSpec {
    fn default() -> Self {
        AlphaSpec::Grid(default_alpha_grid())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Svg,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "svg" => Ok(Self::Svg),
            other => Err(Error::Config(format!("unknown output format '{other}'"))),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Json => "json",
            Self::Svg => "svg",
        })
    }
}

/// Token counts and widths. `s` and `calib_tokens` are image tokens for
/// evaluation and calibration; `m` is the number of text tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Dims {
    pub s: usize,
    pub d: usize,
    pub m: usize,
    pub ffn_mult: usize,
    pub calib_tokens: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Self { s: 512, d: 64, m: 32, ffn_mult: 4, calib_tokens: 4096 }
    }
}

/// Toy-block parameters other than the dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockStyle {
    pub mix_window: usize,
    pub outlier_channels: usize,
    pub outlier_gain: f64,
    pub beta_common: f64,
    pub beta_spread: f64,
    pub weight_row_spread: f64,
    pub weight_col_spread: f64,
    pub bias_std: f64,
    pub ffn_bias_mean: f64,
    pub conditions: usize,
    pub ffn_gate: f64,
    pub mix_sharpness: f64,
}

/// Harness defaults: eight conditions, each lifting four norm channels by
/// 30x, zero common norm shift, FFN branch gated at 0.3.
impl Default for BlockStyle {
    fn default() -> Self {
        Self {
            mix_window: 16,
            outlier_channels: 4,
            outlier_gain: 30.0,
            beta_common: 0.0,
            beta_spread: 0.8,
            weight_row_spread: 0.0,
            weight_col_spread: 0.75,
            bias_std: 0.3,
            ffn_bias_mean: 0.0,
            conditions: 8,
            ffn_gate: 0.3,
            mix_sharpness: 3.0,
        }
    }
}

/// `bits_act` / `bits_weight` of 0 turn the corresponding quantizer into a
/// passthrough; otherwise they must lie in `2..=8`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_seeds: usize,
    pub bits_act: u8,
    pub bits_weight: u8,
    pub weight_block: usize,
    pub presets: Vec<TransformPreset>,
    pub alpha: AlphaSpec,
    pub epsilon: f64,
    pub output_dir: PathBuf,
    pub formats: Vec<OutputFormat>,
    pub dims: Dims,
    pub block: BlockStyle,
    pub channel_spec: Vec<ChannelGenSpec>,
    pub text_channel_spec: Vec<ChannelGenSpec>,
    pub sites: Vec<SiteSpec>,
}

pub fn default_sites() -> Vec<SiteSpec> {
    let site = |id: &str, text: bool| SiteSpec { id: id.into(), text_stream: text, center_exempt: text };
    vec![site("QKV", false), site("OP", false), site("FC1", false), site("FC2", false), site("TX", true)]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_seeds: 5,
            bits_act: 4,
            bits_weight: 4,
            weight_block: DEFAULT_WEIGHT_BLOCK,
            presets: TransformPreset::ALL.to_vec(),
            alpha: AlphaSpec::default(),
            epsilon: DEFAULT_EPSILON,
            output_dir: PathBuf::from("out"),
            formats: vec![OutputFormat::Csv, OutputFormat::Json],
            dims: Dims::default(),
            block: BlockStyle::default(),
            channel_spec: default_image_spec(),
            text_channel_spec: default_text_spec(),
            sites: default_sites(),
        }
    }
}

/// Command-line values that replace config-file values when present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub bits_act: Option<u8>,
    pub bits_weight: Option<u8>,
    pub weight_block: Option<usize>,
    pub preset: Option<TransformPreset>,
    pub alpha: Option<AlphaSpec>,
    pub output_dir: Option<PathBuf>,
    pub formats: Option<Vec<OutputFormat>>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.bits_act {
            self.bits_act = v;
        }
        if let Some(v) = o.bits_weight {
            self.bits_weight = v;
        }
        if let Some(v) = o.weight_block {
            self.weight_block = v;
        }
        if let Some(v) = o.preset {
            self.presets = vec![v];
        }
        if let Some(v) = &o.alpha {
            self.alpha = v.clone();
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = v.clone();
        }
        if let Some(v) = &o.formats {
            self.formats = v.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let Dims { s, d, m, ffn_mult, calib_tokens } = self.dims;
        if s == 0 || d == 0 || m == 0 || ffn_mult == 0 || calib_tokens == 0 {
            return bad(format!("dimensions must be positive: {:?}", self.dims));
        }
        if self.presets.iter().any(|p| p.uses_hadamard()) {
            for width in [d, d * ffn_mult] {
                if !width.is_power_of_two() {
                    return bad(format!("Hadamard presets need power-of-two widths, got {width}"));
                }
            }
        }
        if self.n_seeds == 0 {
            return bad("n_seeds must be at least 1".into());
        }
        if self.seed.checked_add(self.n_seeds as u64 - 1).is_none() {
            return bad("seed range overflows".into());
        }
        for (name, bits) in [("bits_act", self.bits_act), ("bits_weight", self.bits_weight)] {
            if bits != 0 && !(2..=8).contains(&bits) {
                return bad(format!("{name} must be 0 (passthrough) or in 2..=8, got {bits}"));
            }
        }
        if self.weight_block == 0 {
            return bad("weight_block must be positive".into());
        }
        if self.presets.is_empty() {
            return bad("no presets selected".into());
        }
        let grid = self.alpha.grid();
        if grid.is_empty() {
            return bad("alpha grid is empty".into());
        }
        if let Some(a) = grid.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return bad(format!("alpha {a} outside [0, 1]"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.formats.is_empty() {
            return bad("no output formats selected".into());
        }
        if self.block.mix_window == 0 || self.block.conditions == 0 || self.block.outlier_channels > d {
            return bad(format!("invalid block style: {:?}", self.block));
        }
        if self.sites.is_empty() {
            return bad("no sites selected".into());
        }
        for (i, site) in self.sites.iter().enumerate() {
            if self.sites[..i].iter().any(|o| o.id == site.id) {
                return bad(format!("site {} listed twice", site.id));
            }
        }
        for spec in self.channel_spec.iter().chain(&self.text_channel_spec) {
            spec.validate()?;
        }
        if self.channel_spec.is_empty() || self.text_channel_spec.is_empty() {
            return bad("channel specs must be non-empty".into());
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_seeds as u64).map(|i| self.seed + i).collect()
    }

    pub fn act_bits(&self) -> Option<u8> {
        (self.bits_act != 0).then_some(self.bits_act)
    }

    pub fn weight_bits(&self) -> Option<u8> {
        (self.bits_weight != 0).then_some(self.bits_weight)
    }

    pub fn block_params(&self) -> BlockParams {
        BlockParams {
            d: self.dims.d,
            ffn_mult: self.dims.ffn_mult,
            txt_tokens: self.dims.m,
            mix_window: self.block.mix_window,
            outlier_channels: self.block.outlier_channels,
            outlier_gain: self.block.outlier_gain,
            beta_common: self.block.beta_common,
            beta_spread: self.block.beta_spread,
            weight_row_spread: self.block.weight_row_spread,
            weight_col_spread: self.block.weight_col_spread,
            bias_std: self.block.bias_std,
            ffn_bias_mean: self.block.ffn_bias_mean,
            conditions: self.block.conditions,
            ffn_gate: self.block.ffn_gate,
            mix_sharpness: self.block.mix_sharpness,
        }
    }

    /// SHA-256 over the serialized config with the output location and
    /// formats removed, truncated to 16 hex digits.
    pub fn hash(&self) -> Result<String> {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        canonical.formats.clear();
        let digest = Sha256::digest(canonical.to_toml_string()?.as_bytes());
        Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
    }
}

/// Parses `a,b,c` into an alpha grid.
pub fn parse_alpha_grid(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad alpha value '{t}'")))
        })
        .collect()
}
