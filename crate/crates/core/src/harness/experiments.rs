//! Ablation, end-to-end and single-layer studies on seeded synthetic data.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::calibrate::{calibrate_alpha_with, AlphaCalibration};
use crate::harness::config::ExperimentConfig;
use crate::harness::synth::{derive_seed, gen_synthetic, tile_channels, ChannelGenSpec};
use crate::layersim::{ablate_conditions, run_baseline, run_quantized, LinearLayer, QuantSite, SiteId, SiteMap, ToyDiTBlock};
use crate::metrics::{sqnr, whitening_score};
use crate::quant::QuantConfig;
use crate::tensor::{channel_absmax, concat_rows, Tensor2D};
use crate::transforms::{forward_transform, preset_to_plan_with_epsilon, TransformPlan, TransformPreset};

/// Site label used for whole-block and single-layer results.
pub const BLOCK_SITE: &str = "block";

const TAG_BLOCK: u64 = 1;
const TAG_EVAL_IMG: u64 = 2;
const TAG_EVAL_TXT: u64 = 3;
const TAG_CALIB_IMG: u64 = 4;
const TAG_CALIB_TXT: u64 = 5;

/// One measured cell. `alpha` is the migration strength used at the site
/// (the mean over sites for whole-block rows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub preset: TransformPreset,
    pub site: String,
    pub seed: u64,
    pub sqnr_db: f64,
    pub alpha: f64,
}

/// Sorts by preset, site, seed.
/// Selected alpha for one (preset, site, seed) and the full `(alpha, SQNR)` sweep.
pub type CalibrationEntry = (ResultRow, Vec<(f64, f64)>);

pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        (a.preset, &a.site, a.seed)
            .cmp(&(b.preset, &b.site, b.seed))
    });
}

/// Conditioned toy blocks plus evaluation and calibration batches for one
/// seed. Batch `k` of `eval` and `calib` belongs to `blocks[k]`.
#[derive(Debug, Clone)]
pub struct Workload {
    pub blocks: Vec<ToyDiTBlock>,
    pub eval: Vec<(Tensor2D, Tensor2D)>,
    pub calib: Vec<(Tensor2D, Tensor2D)>,
}

impl Workload {
    /// Image token counts in `cfg.dims` are totals, split evenly (rounding
    /// up) across conditions; every batch carries `m` text tokens.
    pub fn new(cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        let k = cfg.block.conditions;
        let blocks = ToyDiTBlock::random_conditions(&cfg.block_params(), derive_seed(seed, TAG_BLOCK))?
            .into_iter()
            .map(|b| ToyDiTBlock::new(b.ops, b.layers, cfg.sites.clone()))
            .collect::<Result<Vec<_>>>()?;
        let d = cfg.dims.d;
        let img_spec = tile_channels(&cfg.channel_spec, d);
        let txt_spec = tile_channels(&cfg.text_channel_spec, d);
        let batches = |tokens: usize, img_tag: u64, txt_tag: u64| -> Result<Vec<(Tensor2D, Tensor2D)>> {
            let per = tokens.div_ceil(k);
            (0..k as u64)
                .map(|c| {
                    Ok((
                        gen_synthetic(&img_spec, per, derive_seed(derive_seed(seed, img_tag), c))?,
                        gen_synthetic(&txt_spec, cfg.dims.m, derive_seed(derive_seed(seed, txt_tag), c))?,
                    ))
                })
                .collect()
        };
        Ok(Self {
            blocks,
            eval: batches(cfg.dims.s, TAG_EVAL_IMG, TAG_EVAL_TXT)?,
            calib: batches(cfg.dims.calib_tokens, TAG_CALIB_IMG, TAG_CALIB_TXT)?,
        })
    }

    fn reference_block(&self) -> &ToyDiTBlock {
        &self.blocks[0]
    }

    /// Full-precision calibration inputs of every site, one batch per condition.
    pub fn calib_site_inputs(&self) -> Result<BTreeMap<SiteId, Vec<Tensor2D>>> {
        let mut out: BTreeMap<SiteId, Vec<Tensor2D>> = BTreeMap::new();
        for (block, (img, txt)) in self.blocks.iter().zip(&self.calib) {
            for (id, x) in block.capture_site_inputs(img, txt)? {
                out.entry(id).or_default().push(x);
            }
        }
        Ok(out)
    }

    /// Block outputs over all evaluation batches, stacked.
    pub fn forward(&self, sites: &SiteMap) -> Result<Tensor2D> {
        let outs = self
            .blocks
            .iter()
            .zip(&self.eval)
            .map(|(b, (img, txt))| b.forward(img, txt, sites))
            .collect::<Result<Vec<_>>>()?;
        concat_rows(&outs)
    }

    /// Per-site plans from pooled calibration statistics, with alpha
    /// searched over the config grid under the given quantizers.
    pub fn calibrated_plans(
        &self,
        cfg: &ExperimentConfig,
        preset: TransformPreset,
        act_cfg: Option<QuantConfig>,
        w_cfg: Option<QuantConfig>,
    ) -> Result<BTreeMap<SiteId, (TransformPlan, f64)>> {
        Ok(self
            .site_calibrations(cfg, preset, act_cfg, w_cfg)?
            .into_iter()
            .map(|(id, (plan, cal))| (id, (plan, cal.alpha)))
            .collect())
    }

    fn site_calibrations(
        &self,
        cfg: &ExperimentConfig,
        preset: TransformPreset,
        act_cfg: Option<QuantConfig>,
        w_cfg: Option<QuantConfig>,
    ) -> Result<BTreeMap<SiteId, (TransformPlan, AlphaCalibration)>> {
        let inputs = self.calib_site_inputs()?;
        let block = self.reference_block();
        let grid = cfg.alpha.grid();
        let mut plans = BTreeMap::new();
        for spec in &block.sites {
            let batches = inputs
                .get(&spec.id)
                .ok_or_else(|| Error::Config(format!("site {} is never reached", spec.id)))?;
            let absmax = channel_absmax(&concat_rows(batches)?);
            let make = |a: f64| block.plan_for_site(&spec.id, preset, &absmax, a, cfg.epsilon);
            let cal = if preset.uses_scale() {
                calibrate_alpha_with(batches, &block.layers[&spec.id], &grid, make, act_cfg, w_cfg)?
            } else {
                AlphaCalibration { alpha: 0.0, table: Vec::new() }
            };
            plans.insert(spec.id.clone(), (make(cal.alpha)?, cal));
        }
        Ok(plans)
    }
}

fn act_config(cfg: &ExperimentConfig) -> Result<Option<QuantConfig>> {
    cfg.act_bits().map(QuantConfig::per_token).transpose()
}

fn weight_config(cfg: &ExperimentConfig) -> Result<Option<QuantConfig>> {
    cfg.weight_bits()
        .map(|b| QuantConfig::per_block(b, cfg.weight_block))
        .transpose()
}

fn cells(cfg: &ExperimentConfig) -> Vec<(TransformPreset, u64)> {
    cfg.presets
        .iter()
        .flat_map(|&p| cfg.seeds().into_iter().map(move |s| (p, s)))
        .collect()
}

/// Per-site ablation: each site's activations are quantized alone and the
/// block output is compared with the full-precision block. Weights stay at
/// full precision.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let act = act_config(cfg)?;
    let per_cell: Vec<Vec<ResultRow>> = cells(cfg)
        .into_par_iter()
        .map(|(preset, seed)| {
            let wl = Workload::new(cfg, seed)?;
            let plans = wl.calibrated_plans(cfg, preset, act, None)?;
            let plan_only = plans.iter().map(|(k, (p, _))| (k.clone(), p.clone())).collect();
            let db = ablate_conditions(&wl.blocks, &wl.eval, &plan_only, cfg.act_bits())?;
            Ok(db
                .into_iter()
                .map(|(site, sqnr_db)| ResultRow {
                    preset,
                    alpha: plans[&site].1,
                    site: site.0,
                    seed,
                    sqnr_db,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<ResultRow> = per_cell.into_iter().flatten().collect();
    sort_rows(&mut rows);
    Ok(rows)
}

/// All sites quantized together (activations and weights); one block-output
/// SQNR per preset and seed.
pub fn run_end2end_toy(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let (act, w) = (act_config(cfg)?, weight_config(cfg)?);
    let mut rows: Vec<ResultRow> = cells(cfg)
        .into_par_iter()
        .map(|(preset, seed)| {
            let wl = Workload::new(cfg, seed)?;
            let plans = wl.calibrated_plans(cfg, preset, act, w)?;
            let mut sites = SiteMap::new();
            for (id, (plan, _)) in &plans {
                let layer = wl.reference_block().layers[id].clone();
                sites.insert(id.clone(), QuantSite::new(layer, plan.clone(), act, w)?);
            }
            let reference = wl.forward(&SiteMap::new())?;
            let y = wl.forward(&sites)?;
            let alpha = plans.values().map(|(_, a)| a).sum::<f64>() / plans.len() as f64;
            Ok(ResultRow {
                preset,
                site: BLOCK_SITE.into(),
                seed,
                sqnr_db: sqnr(&reference, &y)?,
                alpha,
            })
        })
        .collect::<Result<_>>()?;
    sort_rows(&mut rows);
    Ok(rows)
}

/// Alpha sweep tables for every (preset with scaling, site, seed) under the
/// config's activation and weight quantizers.
pub fn run_calibration(cfg: &ExperimentConfig) -> Result<Vec<CalibrationEntry>> {
    cfg.validate()?;
    let (act, w) = (act_config(cfg)?, weight_config(cfg)?);
    let scaled: Vec<_> = cells(cfg).into_iter().filter(|(p, _)| p.uses_scale()).collect();
    let per_cell: Vec<Vec<CalibrationEntry>> = scaled
        .into_par_iter()
        .map(|(preset, seed)| {
            let wl = Workload::new(cfg, seed)?;
            Ok(wl
                .site_calibrations(cfg, preset, act, w)?
                .into_iter()
                .map(|(id, (_, cal))| {
                    let best = cal.table.iter().find(|(a, _)| *a == cal.alpha).map_or(f64::NAN, |t| t.1);
                    let row = ResultRow { preset, site: id.0, seed, sqnr_db: best, alpha: cal.alpha };
                    (row, cal.table)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<_> = per_cell.into_iter().flatten().collect();
    out.sort_by(|a, b| (a.0.preset, &a.0.site, a.0.seed).cmp(&(b.0.preset, &b.0.site, b.0.seed)));
    Ok(out)
}

/// Single-layer study on a small channel fixture: an identity layer whose
/// input is quantized per token, one row per preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStudy {
    pub rows: Vec<ResultRow>,
    pub whitening_raw: f64,
    pub whitening_hadanorm: f64,
}

impl ChannelStudy {
    pub fn sqnr(&self, preset: TransformPreset) -> Option<f64> {
        self.rows.iter().find(|r| r.preset == preset).map(|r| r.sqnr_db)
    }
}

pub fn channel_study(
    spec: &[ChannelGenSpec],
    tokens: usize,
    seed: u64,
    act_bits: u8,
    grid: &[f64],
    epsilon: f64,
) -> Result<ChannelStudy> {
    let eval = gen_synthetic(spec, tokens, derive_seed(seed, TAG_EVAL_IMG))?;
    let calib = gen_synthetic(spec, tokens, derive_seed(seed, TAG_CALIB_IMG))?;
    let d = spec.len();
    let layer = LinearLayer::new(BLOCK_SITE, Tensor2D::identity(d), vec![0.0; d])?;
    let act = Some(QuantConfig::per_token(act_bits)?);
    let absmax = channel_absmax(&calib);
    let w_absmax = layer.weight_absmax();
    let reference = run_baseline(&eval, &layer)?;
    let mut rows = Vec::new();
    let mut whitening_hadanorm = f64::NAN;
    for preset in TransformPreset::ALL {
        let make = |a: f64| preset_to_plan_with_epsilon(preset, &absmax, &w_absmax, a, epsilon);
        let alpha = if preset.uses_scale() {
            calibrate_alpha_with(std::slice::from_ref(&calib), &layer, grid, make, act, None)?.alpha
        } else {
            0.0
        };
        let plan = make(alpha)?;
        if preset == TransformPreset::HadaNorm {
            whitening_hadanorm = whitening_score(&forward_transform(&eval, &plan)?.0);
        }
        let site = QuantSite::new(layer.clone(), plan, act, None)?;
        rows.push(ResultRow {
            preset,
            site: BLOCK_SITE.into(),
            seed,
            sqnr_db: sqnr(&reference, &run_quantized(&eval, &site)?)?,
            alpha,
        });
    }
    Ok(ChannelStudy {
        rows,
        whitening_raw: whitening_score(&eval),
        whitening_hadanorm,
    })
}

/// Mean SQNR per (preset, site) over seeds, in row order.
pub fn mean_by_preset_site(rows: &[ResultRow]) -> BTreeMap<(TransformPreset, String), f64> {
    let mut acc: BTreeMap<(TransformPreset, String), (f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry((r.preset, r.site.clone())).or_insert((0.0, 0));
        e.0 += r.sqnr_db;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}
