//! Integer fake quantization.
//!
//! Two quantizers are modelled:
//! - activations: per-token (per-row) asymmetric min-max grids computed on the fly;
//! - weights: symmetric absmax grids over blocks of consecutive input channels
//!   (rows) within each output column, the last block of a column possibly shorter.
//!
//! Rounding is round-half-to-even throughout. Codes are stored as `i32` and
//! zero points as `f64`; nothing here targets an integer kernel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor2D;

/// Smallest scale a group may have; degenerate groups collapse onto it.
pub const SCALE_FLOOR: f64 = 1e-12;

pub const DEFAULT_WEIGHT_BLOCK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Granularity {
    PerTokenDynamic,
    PerBlock { block_size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    AsymmetricMinMax,
    SymmetricAbsMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantConfig {
    bits: u8,
    granularity: Granularity,
    scheme: Scheme,
}

impl QuantConfig {
    /// Only per-token/asymmetric and per-block/symmetric pairings are accepted.
    pub fn new(bits: u8, granularity: Granularity, scheme: Scheme) -> Result<Self> {
        check_bits(bits)?;
        match (granularity, scheme) {
            (Granularity::PerTokenDynamic, Scheme::AsymmetricMinMax) => {}
            (Granularity::PerBlock { block_size }, Scheme::SymmetricAbsMax) => {
                if block_size == 0 {
                    return Err(Error::Parameter("weight block size must be >= 1".into()));
                }
            }
            (g, s) => {
                return Err(Error::Parameter(format!(
                    "unsupported quantizer pairing {g:?} with {s:?}"
                )))
            }
        }
        Ok(Self {
            bits,
            granularity,
            scheme,
        })
    }

    pub fn per_token(bits: u8) -> Result<Self> {
        Self::new(bits, Granularity::PerTokenDynamic, Scheme::AsymmetricMinMax)
    }

    pub fn per_block(bits: u8, block_size: usize) -> Result<Self> {
        Self::new(bits, Granularity::PerBlock { block_size }, Scheme::SymmetricAbsMax)
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }
    pub fn granularity(&self) -> Granularity {
        self.granularity
    }
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Inclusive integer code range.
    pub fn code_range(&self) -> (i32, i32) {
        code_range(self.scheme, self.bits)
    }
}

fn check_bits(bits: u8) -> Result<()> {
    if !(2..=8).contains(&bits) {
        return Err(Error::Parameter(format!("bits must be in [2, 8], got {bits}")));
    }
    Ok(())
}

fn code_range(scheme: Scheme, bits: u8) -> (i32, i32) {
    match scheme {
        Scheme::AsymmetricMinMax => (0, (1 << bits) - 1),
        Scheme::SymmetricAbsMax => (-(1 << (bits - 1)), (1 << (bits - 1)) - 1),
    }
}

/// Maps an element to the index of its quantization group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupMap {
    /// Group index is the row (token) index.
    PerToken,
    /// Group index is `col * blocks_per_col + row / block_size`.
    PerBlock { block_size: usize, blocks_per_col: usize },
}

impl GroupMap {
    #[inline]
    pub fn group_of(&self, row: usize, col: usize) -> usize {
        match *self {
            Self::PerToken => row,
            Self::PerBlock {
                block_size,
                blocks_per_col,
            } => col * blocks_per_col + row / block_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedTensor {
    pub rows: usize,
    pub cols: usize,
    /// Row-major integer codes.
    pub codes: Vec<i32>,
    pub scales: Vec<f64>,
    pub zero_points: Vec<f64>,
    pub group_map: GroupMap,
    pub config: QuantConfig,
}

impl QuantizedTensor {
    #[inline]
    pub fn code(&self, r: usize, c: usize) -> i32 {
        self.codes[r * self.cols + c]
    }

    pub fn n_groups(&self) -> usize {
        self.scales.len()
    }

    pub fn group_of(&self, r: usize, c: usize) -> usize {
        self.group_map.group_of(r, c)
    }
}

#[inline]
fn quantize_value(x: f64, zero_point: f64, scale: f64, lo: i32, hi: i32) -> i32 {
    let q = ((x - zero_point) / scale).round_ties_even();
    q.clamp(lo as f64, hi as f64) as i32
}

/// Min-max grid step for `[lo, hi]` with `levels` steps.
///
/// The exact quotient is nudged by at most a few ulps to a value `s` for
/// which `((lo + levels*s) - lo) / levels == s` in floating point. The top
/// of a dequantized row then re-derives the same step, which makes per-token
/// fake quantization exactly idempotent.
fn minmax_scale(lo: f64, hi: f64, levels: f64) -> f64 {
    let target = (hi - lo) / levels;
    if target <= SCALE_FLOOR {
        return SCALE_FLOOR;
    }
    let fixed = |s: f64| ((lo + levels * s) - lo) / levels == s;
    let (mut up, mut down) = (target, target);
    for _ in 0..32 {
        if fixed(up) {
            return up;
        }
        if fixed(down) {
            return down;
        }
        up = up.next_up();
        down = down.next_down();
    }
    target
}

/// Per-token asymmetric min-max quantization.
pub fn quantize_activations(x: &Tensor2D, bits: u8) -> Result<QuantizedTensor> {
    let config = QuantConfig::per_token(bits)?;
    let (qlo, qhi) = config.code_range();
    let levels = qhi as f64;
    let mut codes = Vec::with_capacity(x.rows() * x.cols());
    let mut scales = Vec::with_capacity(x.rows());
    let mut zero_points = Vec::with_capacity(x.rows());
    for row in x.iter_rows() {
        let (lo, hi) = row
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        let scale = minmax_scale(lo, hi, levels);
        codes.extend(row.iter().map(|&v| quantize_value(v, lo, scale, qlo, qhi)));
        scales.push(scale);
        zero_points.push(lo);
    }
    Ok(QuantizedTensor {
        rows: x.rows(),
        cols: x.cols(),
        codes,
        scales,
        zero_points,
        group_map: GroupMap::PerToken,
        config,
    })
}

/// Symmetric absmax quantization over blocks of `block` input channels per
/// output column.
pub fn quantize_weights_blocked(w: &Tensor2D, bits: u8, block: usize) -> Result<QuantizedTensor> {
    let config = QuantConfig::per_block(bits, block)?;
    let (qlo, qhi) = config.code_range();
    let qmax = qhi as f64;
    let (rows, cols) = w.shape();
    let blocks_per_col = rows.div_ceil(block);
    let group_map = GroupMap::PerBlock {
        block_size: block,
        blocks_per_col,
    };
    let n_groups = cols * blocks_per_col;
    let mut absmax = vec![0.0_f64; n_groups];
    for r in 0..rows {
        for c in 0..cols {
            let g = group_map.group_of(r, c);
            absmax[g] = absmax[g].max(w.get(r, c).abs());
        }
    }
    let scales: Vec<f64> = absmax.iter().map(|a| (a / qmax).max(SCALE_FLOOR)).collect();
    let mut codes = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let g = group_map.group_of(r, c);
            codes.push(quantize_value(w.get(r, c), 0.0, scales[g], qlo, qhi));
        }
    }
    Ok(QuantizedTensor {
        rows,
        cols,
        codes,
        scales,
        zero_points: vec![0.0; n_groups],
        group_map,
        config,
    })
}

/// `code * scale + zero_point` for every element.
pub fn dequantize(q: &QuantizedTensor) -> Tensor2D {
    let mut data = Vec::with_capacity(q.rows * q.cols);
    for r in 0..q.rows {
        for c in 0..q.cols {
            let g = q.group_of(r, c);
            data.push(q.code(r, c) as f64 * q.scales[g] + q.zero_points[g]);
        }
    }
    Tensor2D::new(q.rows, q.cols, data).expect("dequantized values are finite")
}

/// Quantize then dequantize with `cfg`.
pub fn fake_quant(x: &Tensor2D, cfg: &QuantConfig) -> Result<Tensor2D> {
    let q = match cfg.granularity {
        Granularity::PerTokenDynamic => quantize_activations(x, cfg.bits)?,
        Granularity::PerBlock { block_size } => quantize_weights_blocked(x, cfg.bits, block_size)?,
    };
    Ok(dequantize(&q))
}

/// [`fake_quant`] where `None` means the quantizer is bypassed.
pub fn fake_quant_opt(x: &Tensor2D, cfg: Option<&QuantConfig>) -> Result<Tensor2D> {
    match cfg {
        Some(c) => fake_quant(x, c),
        None => Ok(x.clone()),
    }
}
