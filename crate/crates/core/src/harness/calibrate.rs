//! Migration-strength (alpha) search on calibration data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layersim::{run_baseline, run_quantized, LinearLayer, QuantSite};
use crate::metrics::sqnr;
use crate::quant::{QuantConfig, DEFAULT_WEIGHT_BLOCK};
use crate::tensor::{channel_absmax, concat_rows, Tensor2D};
use crate::transforms::{preset_to_plan, TransformPlan, TransformPreset};

/// SQNR differences at or below this are ties; ties go to the smaller alpha.
pub const ALPHA_TIE_DB: f64 = 1e-9;

/// `{0.0, 0.1, ..., 1.0}`.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaCalibration {
    pub alpha: f64,
    /// `(alpha, layer-output SQNR in dB)` for every grid point, in grid order.
    pub table: Vec<(f64, f64)>,
}

/// Picks the alpha maximizing layer-output SQNR over the calibration
/// batches (error energy pooled, each batch transformed on its own);
/// `make_plan` builds the site's transform for a candidate alpha.
pub fn calibrate_alpha_with(
    batches: &[Tensor2D],
    layer: &LinearLayer,
    grid: &[f64],
    make_plan: impl Fn(f64) -> Result<TransformPlan>,
    act_cfg: Option<QuantConfig>,
    w_cfg: Option<QuantConfig>,
) -> Result<AlphaCalibration> {
    if grid.is_empty() {
        return Err(Error::Config("alpha grid is empty".into()));
    }
    let reference = concat_rows(&batches.iter().map(|x| run_baseline(x, layer)).collect::<Result<Vec<_>>>()?)?;
    let mut table = Vec::with_capacity(grid.len());
    for &alpha in grid {
        let site = QuantSite::new(layer.clone(), make_plan(alpha)?, act_cfg, w_cfg)?;
        let outs = batches.iter().map(|x| run_quantized(x, &site)).collect::<Result<Vec<_>>>()?;
        table.push((alpha, sqnr(&reference, &concat_rows(&outs)?)?));
    }
    let mut best = table[0];
    for &(alpha, db) in &table[1..] {
        let better = db > best.1 + ALPHA_TIE_DB;
        let tie_smaller = (db - best.1).abs() <= ALPHA_TIE_DB && alpha < best.0;
        if better || tie_smaller {
            best = (alpha, db);
        }
    }
    Ok(AlphaCalibration { alpha: best.0, table })
}

/// Alpha search for a single layer with activations and weights both at
/// `bits` (weights in blocks of 128). Presets without channel scaling
/// return alpha 0 and an empty table.
pub fn calibrate_alpha(
    calib: &Tensor2D,
    layer: &LinearLayer,
    preset: TransformPreset,
    grid: &[f64],
    bits: u8,
) -> Result<AlphaCalibration> {
    if !preset.uses_scale() {
        return Ok(AlphaCalibration { alpha: 0.0, table: Vec::new() });
    }
    let act_absmax = channel_absmax(calib);
    let w_absmax = layer.weight_absmax();
    calibrate_alpha_with(
        std::slice::from_ref(calib),
        layer,
        grid,
        |a| preset_to_plan(preset, &act_absmax, &w_absmax, a),
        Some(QuantConfig::per_token(bits)?),
        Some(QuantConfig::per_block(bits, DEFAULT_WEIGHT_BLOCK)?),
    )
}
