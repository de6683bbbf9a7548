//! Quantized linear layers and a toy transformer block.
//!
//! A [`QuantSite`] is one linear layer together with the transform plan and
//! the quantizers placed in front of it. [`run_quantized`] executes the
//! deployed form of that layer: online forward transform, activation fake
//! quantization, multiplication by the fused (and optionally quantized)
//! weights, and the per-call bias correction.
//!
//! [`ToyDiTBlock`] is a small op graph over named tensors. Its default
//! topology is a simplified diffusion-transformer block:
//!
//! ```text
//! img -> LN0 -> QKV -> slice V -> windowed mix -> OP -> + img         = h1
//! txt -> TX -> cross mix ------------------------------> + h1         = h2
//! h2  -> LN1 -> FC1 -> GELU -> FC2 ---------------------> + h2         = out
//! ```
//!
//! Attention scores are replaced by fixed row-stochastic mixing matrices;
//! the norms are exact and never quantized.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::sqnr;
use crate::quant::{fake_quant_opt, QuantConfig};
use crate::rng::SeededRng;
use crate::tensor::{add_row_vector, channel_absmax, concat_rows, matmul, Tensor2D};
use crate::transforms::{
    effective_bias, forward_transform, fuse_weights, preset_to_plan_with_epsilon, TransformPlan,
    TransformPreset, DEFAULT_EPSILON,
};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SiteId(pub String);

impl SiteId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SiteId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLayer {
    pub name: SiteId,
    weights: Tensor2D,
    bias: Vec<f64>,
}

impl LinearLayer {
    pub fn new(name: impl Into<SiteId>, weights: Tensor2D, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.cols() {
            return Err(Error::dim(format!(
                "bias length {} vs {} output channels",
                bias.len(),
                weights.cols()
            )));
        }
        Ok(Self {
            name: name.into(),
            weights,
            bias,
        })
    }

    pub fn weights(&self) -> &Tensor2D {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    /// Per-input-channel `max |W_i|` (row absmax).
    pub fn weight_absmax(&self) -> Vec<f64> {
        self.weights
            .iter_rows()
            .map(|r| r.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
            .collect()
    }
}

impl From<String> for SiteId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

/// Full-precision `X·W + b`.
pub fn run_baseline(x: &Tensor2D, layer: &LinearLayer) -> Result<Tensor2D> {
    add_row_vector(&matmul(x, &layer.weights)?, &layer.bias)
}

/// A linear layer with its transform and quantizers. `None` quantizer
/// configs are passthrough; a disabled site runs the exact baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantSite {
    pub id: SiteId,
    pub layer: LinearLayer,
    pub plan: TransformPlan,
    pub act_cfg: Option<QuantConfig>,
    pub w_cfg: Option<QuantConfig>,
    pub enabled: bool,
}

impl QuantSite {
    pub fn new(
        layer: LinearLayer,
        plan: TransformPlan,
        act_cfg: Option<QuantConfig>,
        w_cfg: Option<QuantConfig>,
    ) -> Result<Self> {
        if plan.dim() != layer.in_dim() {
            return Err(Error::dim(format!(
                "plan has {} channels, layer {} has {} inputs",
                plan.dim(),
                layer.name,
                layer.in_dim()
            )));
        }
        Ok(Self {
            id: layer.name.clone(),
            layer,
            plan,
            act_cfg,
            w_cfg,
            enabled: true,
        })
    }
}

/// Deployed path: transform, quantize activations, multiply by the fused
/// weights (quantized when `w_cfg` is set), add the corrected bias.
pub fn run_quantized(x: &Tensor2D, site: &QuantSite) -> Result<Tensor2D> {
    if !site.enabled {
        return run_baseline(x, &site.layer);
    }
    let (xt, mu) = forward_transform(x, &site.plan)?;
    let xq = fake_quant_opt(&xt, site.act_cfg.as_ref())?;
    let wt = fuse_weights(&site.layer.weights, &site.plan)?;
    let wq = fake_quant_opt(&wt, site.w_cfg.as_ref())?;
    let bt = effective_bias(&site.layer.bias, &mu, &site.plan, &wq)?;
    add_row_vector(&matmul(&xq, &wq)?, &bt)
}

/// One node of the block graph. Tensors are addressed by name; the graph
/// reads `img` and `txt` and must write `out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum BlockOp {
    Linear {
        site: SiteId,
        input: String,
        output: String,
    },
    /// Per-token layer norm followed by a per-channel affine map.
    LayerNorm {
        input: String,
        output: String,
        gamma: Vec<f64>,
        beta: Vec<f64>,
    },
    /// Row-stochastic mixing within consecutive windows of `matrix.rows()` tokens.
    WindowMix {
        input: String,
        output: String,
        matrix: Tensor2D,
    },
    /// Target token `t` takes `matrix[t % P]` weighted sums of all source tokens;
    /// the number of target tokens is copied from `like`.
    CrossMix {
        input: String,
        like: String,
        output: String,
        matrix: Tensor2D,
    },
    Slice {
        input: String,
        output: String,
        start: usize,
        end: usize,
    },
    Gelu {
        input: String,
        output: String,
    },
    Add {
        lhs: String,
        rhs: String,
        output: String,
    },
}

/// Per-site options that are part of the block description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteSpec {
    pub id: SiteId,
    /// Text-stream site (reported separately from image sites).
    #[serde(default)]
    pub text_stream: bool,
    /// Never subtract the dynamic mean at this site, whatever the preset.
    #[serde(default)]
    pub center_exempt: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDiTBlock {
    pub ops: Vec<BlockOp>,
    pub layers: BTreeMap<SiteId, LinearLayer>,
    pub sites: Vec<SiteSpec>,
}

/// Knobs for [`ToyDiTBlock::random`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockParams {
    pub d: usize,
    pub ffn_mult: usize,
    pub txt_tokens: usize,
    pub mix_window: usize,
    /// Channels whose norm gain is `outlier_gain` instead of ~1.
    pub outlier_channels: usize,
    pub outlier_gain: f64,
    /// Norm shifts are `beta_common + beta_spread * N(0,1)` per channel.
    pub beta_common: f64,
    pub beta_spread: f64,
    /// Log-normal spread of per-input-channel weight magnitudes.
    pub weight_row_spread: f64,
    /// Log-normal spread of per-output-channel weight magnitudes.
    pub weight_col_spread: f64,
    pub bias_std: f64,
    /// Mean of the FC1 bias; negative values make the GELU output sparse.
    pub ffn_bias_mean: f64,
    /// Number of conditioning states (see [`ToyDiTBlock::random_conditions`]).
    pub conditions: usize,
    /// Scale on the FC2 weights and bias, i.e. a fixed gate on the FFN branch.
    pub ffn_gate: f64,
    /// Exponent applied to uniform draws before normalising mixing rows;
    /// larger values give more peaked mixing.
    pub mix_sharpness: f64,
}

impl Default for BlockParams {
    fn default() -> Self {
        Self {
            d: 64,
            ffn_mult: 4,
            txt_tokens: 32,
            mix_window: 16,
            outlier_channels: 2,
            outlier_gain: 12.0,
            beta_common: 0.6,
            beta_spread: 0.6,
            weight_row_spread: 0.5,
            weight_col_spread: 0.0,
            bias_std: 0.3,
            ffn_bias_mean: 0.0,
            conditions: 1,
            ffn_gate: 1.0,
            mix_sharpness: 3.0,
        }
    }
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn layer_norm(x: &Tensor2D, gamma: &[f64], beta: &[f64]) -> Result<Tensor2D> {
    if gamma.len() != x.cols() || beta.len() != x.cols() {
        return Err(Error::dim("layer norm affine length mismatch"));
    }
    let d = x.cols() as f64;
    let mut data = Vec::with_capacity(x.data().len());
    for row in x.iter_rows() {
        let mean = row.iter().sum::<f64>() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let inv = 1.0 / (var + 1e-6).sqrt();
        for (i, &v) in row.iter().enumerate() {
            data.push((v - mean) * inv * gamma[i] + beta[i]);
        }
    }
    Tensor2D::new(x.rows(), x.cols(), data)
}

fn window_mix(x: &Tensor2D, m: &Tensor2D) -> Result<Tensor2D> {
    let p = m.rows();
    let (s, d) = x.shape();
    let mut out = vec![0.0; s * d];
    for start in (0..s).step_by(p) {
        let len = p.min(s - start);
        for i in 0..len {
            let weights = &m.row(i)[..len];
            let norm: f64 = weights.iter().sum();
            let orow = &mut out[(start + i) * d..(start + i + 1) * d];
            for (j, &w) in weights.iter().enumerate() {
                let w = w / norm;
                for (o, v) in orow.iter_mut().zip(x.row(start + j)) {
                    *o += w * v;
                }
            }
        }
    }
    Tensor2D::new(s, d, out)
}

fn cross_mix(src: &Tensor2D, target_rows: usize, m: &Tensor2D) -> Result<Tensor2D> {
    if m.cols() != src.rows() {
        return Err(Error::dim(format!(
            "cross mix expects {} source tokens, got {}",
            m.cols(),
            src.rows()
        )));
    }
    let p = m.rows();
    let patterns = matmul(m, src)?;
    let mut data = Vec::with_capacity(target_rows * src.cols());
    for t in 0..target_rows {
        data.extend_from_slice(patterns.row(t % p));
    }
    Tensor2D::new(target_rows, src.cols(), data)
}

fn stochastic_rows(rng: &mut SeededRng, rows: usize, cols: usize, sharpness: f64) -> Result<Tensor2D> {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let raw: Vec<f64> = (0..cols).map(|_| rng.uniform().powf(sharpness) + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        data.extend(raw.iter().map(|v| v / total));
    }
    Tensor2D::new(rows, cols, data)
}

/// Mutable view over a site's quantization settings during block evaluation.
pub type SiteMap = BTreeMap<SiteId, QuantSite>;

impl ToyDiTBlock {
    /// Standard five-site block with seeded random parameters.
    pub fn random(params: &BlockParams, seed: u64) -> Result<Self> {
        let mut one = params.clone();
        one.conditions = 1;
        Ok(Self::random_conditions(&one, seed)?.swap_remove(0))
    }

    /// `params.conditions` blocks sharing every linear layer and mixing
    /// matrix. Each condition draws its own norm affines, with its own
    /// outlier channels, the way a conditioning signal modulates a norm.
    pub fn random_conditions(params: &BlockParams, seed: u64) -> Result<Vec<Self>> {
        let d = params.d;
        let f = d * params.ffn_mult;
        if d == 0 || f == 0 || params.txt_tokens == 0 || params.mix_window == 0 || params.conditions == 0 {
            return Err(Error::Parameter("block dimensions must be positive".into()));
        }
        if !(params.ffn_gate > 0.0 && params.mix_sharpness > 0.0) {
            return Err(Error::Parameter("ffn gate and mixing sharpness must be positive".into()));
        }
        if params.outlier_channels > d {
            return Err(Error::Parameter("more outlier channels than channels".into()));
        }
        let mut rng = SeededRng::new(seed, 0x0b10c);
        let linear = |name: &str, din: usize, dout: usize, bias_mean: f64, rng: &mut SeededRng| -> Result<LinearLayer> {
            let base = 1.0 / (din as f64).sqrt();
            let row_gain: Vec<f64> = (0..din)
                .map(|_| (params.weight_row_spread * rng.standard_normal()).exp())
                .collect();
            let col_gain: Vec<f64> = (0..dout)
                .map(|_| (params.weight_col_spread * rng.standard_normal()).exp())
                .collect();
            let w = Tensor2D::from_fn(din, dout, |r, c| base * row_gain[r] * col_gain[c] * rng.standard_normal())?;
            let b = (0..dout).map(|_| bias_mean + params.bias_std * rng.standard_normal()).collect();
            LinearLayer::new(name, w, b)
        };
        let qkv = linear("QKV", d, 3 * d, 0.0, &mut rng)?;
        let op = linear("OP", d, d, 0.0, &mut rng)?;
        let tx = linear("TX", d, d, 0.0, &mut rng)?;
        let fc1 = linear("FC1", d, f, params.ffn_bias_mean, &mut rng)?;
        let fc2 = linear("FC2", f, d, 0.0, &mut rng)?;
        let fc2 = LinearLayer::new(
            "FC2",
            fc2.weights.scale(params.ffn_gate)?,
            fc2.bias.iter().map(|b| b * params.ffn_gate).collect(),
        )?;
        let self_mix = stochastic_rows(&mut rng, params.mix_window, params.mix_window, params.mix_sharpness)?;
        let cross = stochastic_rows(&mut rng, params.mix_window, params.txt_tokens, params.mix_sharpness)?;
        let layers: BTreeMap<SiteId, LinearLayer> = [qkv, op, tx, fc1, fc2]
            .into_iter()
            .map(|l| (l.name.clone(), l))
            .collect();

        let norm = |rng: &mut SeededRng| {
            let mut gamma: Vec<f64> = (0..d).map(|_| 1.0 + 0.1 * rng.standard_normal()).collect();
            let mut picked = 0;
            while picked < params.outlier_channels {
                let c = rng.index(d);
                if gamma[c] != params.outlier_gain {
                    gamma[c] = params.outlier_gain;
                    picked += 1;
                }
            }
            let beta: Vec<f64> = (0..d)
                .map(|_| params.beta_common + params.beta_spread * rng.standard_normal())
                .collect();
            (gamma, beta)
        };
        let site = |id: &str, text: bool| SiteSpec {
            id: id.into(),
            text_stream: text,
            center_exempt: text,
        };
        let sites = vec![site("QKV", false), site("OP", false), site("FC1", false), site("FC2", false), site("TX", true)];

        (0..params.conditions as u64)
            .map(|k| {
                let mut rng = SeededRng::new(seed, 0x0b10c + 1 + k);
                let (g0, b0) = norm(&mut rng);
                let (g1, b1) = norm(&mut rng);
                let s = |v: &str| v.to_owned();
                let ops = vec![
                    BlockOp::LayerNorm { input: s("img"), output: s("n0"), gamma: g0, beta: b0 },
                    BlockOp::Linear { site: "QKV".into(), input: s("n0"), output: s("qkv") },
                    BlockOp::Slice { input: s("qkv"), output: s("v"), start: 2 * d, end: 3 * d },
                    BlockOp::WindowMix { input: s("v"), output: s("attn"), matrix: self_mix.clone() },
                    BlockOp::Linear { site: "OP".into(), input: s("attn"), output: s("o") },
                    BlockOp::Add { lhs: s("img"), rhs: s("o"), output: s("h1") },
                    BlockOp::Linear { site: "TX".into(), input: s("txt"), output: s("ctx") },
                    BlockOp::CrossMix { input: s("ctx"), like: s("img"), output: s("xattn"), matrix: cross.clone() },
                    BlockOp::Add { lhs: s("h1"), rhs: s("xattn"), output: s("h2") },
                    BlockOp::LayerNorm { input: s("h2"), output: s("n1"), gamma: g1, beta: b1 },
                    BlockOp::Linear { site: "FC1".into(), input: s("n1"), output: s("f1") },
                    BlockOp::Gelu { input: s("f1"), output: s("g") },
                    BlockOp::Linear { site: "FC2".into(), input: s("g"), output: s("f2") },
                    BlockOp::Add { lhs: s("h2"), rhs: s("f2"), output: s("out") },
                ];
                Self::new(ops, layers.clone(), sites.clone())
            })
            .collect()
    }

    /// Checks that every linear op has a layer and every site spec names a linear op.
    pub fn new(ops: Vec<BlockOp>, layers: BTreeMap<SiteId, LinearLayer>, sites: Vec<SiteSpec>) -> Result<Self> {
        for op in &ops {
            if let BlockOp::Linear { site, .. } = op {
                if !layers.contains_key(site) {
                    return Err(Error::Config(format!("linear op references unknown layer {site}")));
                }
            }
        }
        for spec in &sites {
            if !layers.contains_key(&spec.id) {
                return Err(Error::Config(format!("site {} has no layer", spec.id)));
            }
        }
        if !ops.iter().any(|op| op_output(op) == "out") {
            return Err(Error::Config("block never writes 'out'".into()));
        }
        Ok(Self { ops, layers, sites })
    }

    /// Block made of a single linear layer from `img` to `out`.
    pub fn single_layer(layer: LinearLayer) -> Result<Self> {
        let id = layer.name.clone();
        let ops = vec![BlockOp::Linear {
            site: id.clone(),
            input: "img".into(),
            output: "out".into(),
        }];
        let sites = vec![SiteSpec {
            id: id.clone(),
            text_stream: false,
            center_exempt: false,
        }];
        Self::new(ops, BTreeMap::from([(id, layer)]), sites)
    }

    pub fn site_spec(&self, id: &SiteId) -> Option<&SiteSpec> {
        self.sites.iter().find(|s| &s.id == id)
    }

    /// Runs the graph; linear ops whose site is present in `sites` go through
    /// [`run_quantized`], the rest run at full precision. Every linear input
    /// is offered to `observe`.
    pub fn forward_observed(
        &self,
        img: &Tensor2D,
        txt: &Tensor2D,
        sites: &SiteMap,
        mut observe: impl FnMut(&SiteId, &Tensor2D),
    ) -> Result<Tensor2D> {
        let mut env: BTreeMap<&str, Tensor2D> = BTreeMap::new();
        env.insert("img", img.clone());
        env.insert("txt", txt.clone());
        let get = |env: &BTreeMap<&str, Tensor2D>, k: &str| -> Result<Tensor2D> {
            env.get(k)
                .cloned()
                .ok_or_else(|| Error::Config(format!("block tensor '{k}' used before definition")))
        };
        for op in &self.ops {
            let value = match op {
                BlockOp::Linear { site, input, .. } => {
                    let x = get(&env, input)?;
                    observe(site, &x);
                    match sites.get(site) {
                        Some(qs) => run_quantized(&x, qs)?,
                        None => run_baseline(&x, &self.layers[site])?,
                    }
                }
                BlockOp::LayerNorm { input, gamma, beta, .. } => layer_norm(&get(&env, input)?, gamma, beta)?,
                BlockOp::WindowMix { input, matrix, .. } => window_mix(&get(&env, input)?, matrix)?,
                BlockOp::CrossMix { input, like, matrix, .. } => {
                    let rows = get(&env, like)?.rows();
                    cross_mix(&get(&env, input)?, rows, matrix)?
                }
                BlockOp::Slice { input, start, end, .. } => get(&env, input)?.slice_cols(*start, *end)?,
                BlockOp::Gelu { input, .. } => get(&env, input)?.map(gelu)?,
                BlockOp::Add { lhs, rhs, .. } => get(&env, lhs)?.add(&get(&env, rhs)?)?,
            };
            env.insert(op_output(op), value);
        }
        get(&env, "out")
    }

    pub fn forward(&self, img: &Tensor2D, txt: &Tensor2D, sites: &SiteMap) -> Result<Tensor2D> {
        self.forward_observed(img, txt, sites, |_, _| {})
    }

    /// Full-precision run.
    pub fn forward_fp(&self, img: &Tensor2D, txt: &Tensor2D) -> Result<Tensor2D> {
        self.forward(img, txt, &SiteMap::new())
    }

    /// Full-precision inputs of every linear site.
    pub fn capture_site_inputs(&self, img: &Tensor2D, txt: &Tensor2D) -> Result<BTreeMap<SiteId, Tensor2D>> {
        let mut seen = BTreeMap::new();
        self.forward_observed(img, txt, &SiteMap::new(), |id, x| {
            seen.insert(id.clone(), x.clone());
        })?;
        Ok(seen)
    }

    /// Plan for `site` under `preset`, honouring the site's centering exemption.
    pub fn plan_for_site(
        &self,
        site: &SiteId,
        preset: TransformPreset,
        act_absmax: &[f64],
        alpha: f64,
        epsilon: f64,
    ) -> Result<TransformPlan> {
        let layer = self
            .layers
            .get(site)
            .ok_or_else(|| Error::Config(format!("unknown site {site}")))?;
        let plan = preset_to_plan_with_epsilon(preset, act_absmax, &layer.weight_absmax(), alpha, epsilon)?;
        let exempt = self.site_spec(site).is_some_and(|s| s.center_exempt);
        Ok(if exempt { plan.without_center() } else { plan })
    }
}

fn op_output(op: &BlockOp) -> &str {
    match op {
        BlockOp::Linear { output, .. }
        | BlockOp::LayerNorm { output, .. }
        | BlockOp::WindowMix { output, .. }
        | BlockOp::CrossMix { output, .. }
        | BlockOp::Slice { output, .. }
        | BlockOp::Gelu { output, .. }
        | BlockOp::Add { output, .. } => output,
    }
}

/// Quantizes one site at a time (activations only) and reports the block
/// output SQNR against the full-precision block for each site.
///
/// `plans` supplies the transform of every site; `act_bits = None` keeps the
/// quantizer in passthrough.
pub fn ablate_sites_with(
    block: &ToyDiTBlock,
    x_img: &Tensor2D,
    x_txt: &Tensor2D,
    plans: &BTreeMap<SiteId, TransformPlan>,
    act_bits: Option<u8>,
) -> Result<BTreeMap<SiteId, f64>> {
    ablate_conditions(std::slice::from_ref(block), &[(x_img.clone(), x_txt.clone())], plans, act_bits)
}

/// [`ablate_sites_with`] over several conditioned variants of one block.
/// `inputs[k]` is the `(img, txt)` batch run through `blocks[k]`; the SQNR
/// pools the error energy of all batches. Sites are taken from `blocks[0]`.
pub fn ablate_conditions(
    blocks: &[ToyDiTBlock],
    inputs: &[(Tensor2D, Tensor2D)],
    plans: &BTreeMap<SiteId, TransformPlan>,
    act_bits: Option<u8>,
) -> Result<BTreeMap<SiteId, f64>> {
    if blocks.is_empty() || blocks.len() != inputs.len() {
        return Err(Error::dim(format!("{} blocks for {} input batches", blocks.len(), inputs.len())));
    }
    let run = |sites: &SiteMap| -> Result<Tensor2D> {
        let outs = blocks
            .iter()
            .zip(inputs)
            .map(|(b, (img, txt))| b.forward(img, txt, sites))
            .collect::<Result<Vec<_>>>()?;
        concat_rows(&outs)
    };
    let reference = run(&SiteMap::new())?;
    let act_cfg = act_bits.map(QuantConfig::per_token).transpose()?;
    let mut out = BTreeMap::new();
    for spec in &blocks[0].sites {
        let plan = plans
            .get(&spec.id)
            .ok_or_else(|| Error::Config(format!("no plan for site {}", spec.id)))?;
        let site = QuantSite::new(blocks[0].layers[&spec.id].clone(), plan.clone(), act_cfg, None)?;
        let y = run(&SiteMap::from([(spec.id.clone(), site)]))?;
        out.insert(spec.id.clone(), sqnr(&reference, &y)?);
    }
    Ok(out)
}

/// [`ablate_sites_with`] using plans whose statistics come from the
/// evaluation inputs themselves, with migration strength 0.5.
pub fn ablate_sites(
    block: &ToyDiTBlock,
    x_img: &Tensor2D,
    x_txt: &Tensor2D,
    preset: TransformPreset,
    bits: Option<u8>,
) -> Result<BTreeMap<SiteId, f64>> {
    let inputs = block.capture_site_inputs(x_img, x_txt)?;
    let mut plans = BTreeMap::new();
    for spec in &block.sites {
        let absmax = channel_absmax(&inputs[&spec.id]);
        plans.insert(
            spec.id.clone(),
            block.plan_for_site(&spec.id, preset, &absmax, 0.5, DEFAULT_EPSILON)?,
        );
    }
    ablate_sites_with(block, x_img, x_txt, &plans, bits)
}
