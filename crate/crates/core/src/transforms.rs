//! Centering, channel scaling and Hadamard rotation of linear-layer inputs,
//! with the matching weight fusion and bias correction.
//!
//! For a layer `Y = X·W + b` the transformed layer computes
//!
//! ```text
//! X~ = (X - mu)·diag(1/sigma)·H        (online, per call)
//! W~ = H^T·diag(sigma)·W               (offline, fused)
//! b~ = b + (mu·diag(1/sigma)·H)·W~     (per call, uses the W~ actually deployed)
//! ```
//!
//! and `X~·W~ + b~ = X·W + b` exactly when nothing is quantized. `mu` is the
//! per-call channel mean; `sigma` is static and comes from calibration
//! statistics through [`compute_sigma`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fwht::{fwht_in_place, fwht_rows, HadamardSize};
use crate::tensor::{channel_means, scale_columns, scale_rows, sub_row_vector, vecmat, Tensor2D};

pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Named combinations of the three transform steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformPreset {
    None,
    SmoothQuant,
    QuaRot,
    Sdcb,
    DynCenter,
    HadaNorm,
}

impl TransformPreset {
    pub const ALL: [TransformPreset; 6] = [
        Self::None,
        Self::SmoothQuant,
        Self::QuaRot,
        Self::Sdcb,
        Self::DynCenter,
        Self::HadaNorm,
    ];

    /// `(center, scale, hadamard)` flags.
    pub fn flags(self) -> (bool, bool, bool) {
        match self {
            Self::None => (false, false, false),
            Self::SmoothQuant => (false, true, false),
            Self::QuaRot => (false, false, true),
            Self::Sdcb => (false, true, true),
            Self::DynCenter => (true, false, false),
            Self::HadaNorm => (true, true, true),
        }
    }

    pub fn uses_scale(self) -> bool {
        self.flags().1
    }

    pub fn uses_hadamard(self) -> bool {
        self.flags().2
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::SmoothQuant => "smoothquant",
            Self::QuaRot => "quarot",
            Self::Sdcb => "sdcb",
            Self::DynCenter => "dyncenter",
            Self::HadaNorm => "hadanorm",
        }
    }
}

impl fmt::Display for TransformPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for TransformPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown preset '{s}' (expected none|smoothquant|quarot|sdcb|dyncenter|hadanorm)"
                ))
            })
    }
}

/// Which steps run, plus the static per-channel scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformPlan {
    center: bool,
    scale: bool,
    hadamard: bool,
    sigma: Vec<f64>,
    alpha: f64,
    epsilon: f64,
}

impl TransformPlan {
    /// Validates flags against `sigma`. When `scale` is off, `sigma` must be all ones.
    pub fn new(
        center: bool,
        scale: bool,
        hadamard: bool,
        sigma: Vec<f64>,
        alpha: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if sigma.is_empty() {
            return Err(Error::dim("transform plan needs at least one channel"));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Parameter(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Parameter(format!("alpha {alpha} outside [0, 1]")));
        }
        if sigma.iter().any(|s| !s.is_finite() || *s < epsilon) {
            return Err(Error::Parameter("sigma must be finite and >= epsilon".into()));
        }
        if !scale && sigma.iter().any(|&s| s != 1.0) {
            return Err(Error::Parameter("sigma must be all ones when scaling is off".into()));
        }
        if hadamard {
            HadamardSize::new(sigma.len())?;
        }
        Ok(Self {
            center,
            scale,
            hadamard,
            sigma,
            alpha,
            epsilon,
        })
    }

    /// Plan with every step disabled.
    pub fn identity(d: usize) -> Self {
        Self {
            center: false,
            scale: false,
            hadamard: false,
            sigma: vec![1.0; d],
            alpha: 0.0,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn center(&self) -> bool {
        self.center
    }
    pub fn scale(&self) -> bool {
        self.scale
    }
    pub fn hadamard(&self) -> bool {
        self.hadamard
    }
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    /// Same plan with centering switched off.
    pub fn without_center(&self) -> Self {
        Self {
            center: false,
            ..self.clone()
        }
    }

    fn check_dim(&self, d: usize, what: &str) -> Result<()> {
        if d != self.dim() {
            return Err(Error::dim(format!(
                "{what} has {d} channels, plan expects {}",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Per-channel migration scale `max|X_i|^alpha / max|W_i|^(1-alpha)`.
///
/// Both statistics are clamped below at `epsilon` before exponentiation and
/// the result is floored at `epsilon`, so dead channels stay invertible.
pub fn compute_sigma(
    act_absmax: &[f64],
    weight_absmax: &[f64],
    alpha: f64,
    epsilon: f64,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Parameter(format!("alpha {alpha} outside [0, 1]")));
    }
    if act_absmax.len() != weight_absmax.len() {
        return Err(Error::dim(format!(
            "activation stats have {} channels, weight stats {}",
            act_absmax.len(),
            weight_absmax.len()
        )));
    }
    if act_absmax.iter().chain(weight_absmax).any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::Parameter("absmax statistics must be finite and >= 0".into()));
    }
    Ok(act_absmax
        .iter()
        .zip(weight_absmax)
        .map(|(&a, &w)| {
            let s = a.max(epsilon).powf(alpha) / w.max(epsilon).powf(1.0 - alpha);
            s.max(epsilon)
        })
        .collect())
}

/// Builds the plan for `preset`; `sigma` is computed only when the preset scales.
pub fn preset_to_plan(
    preset: TransformPreset,
    act_absmax: &[f64],
    weight_absmax: &[f64],
    alpha: f64,
) -> Result<TransformPlan> {
    preset_to_plan_with_epsilon(preset, act_absmax, weight_absmax, alpha, DEFAULT_EPSILON)
}

pub fn preset_to_plan_with_epsilon(
    preset: TransformPreset,
    act_absmax: &[f64],
    weight_absmax: &[f64],
    alpha: f64,
    epsilon: f64,
) -> Result<TransformPlan> {
    let (center, scale, hadamard) = preset.flags();
    let sigma = if scale {
        compute_sigma(act_absmax, weight_absmax, alpha, epsilon)?
    } else {
        vec![1.0; act_absmax.len()]
    };
    TransformPlan::new(center, scale, hadamard, sigma, alpha, epsilon)
}

/// Centering and scaling steps only, i.e. the input to the Hadamard step.
pub fn center_and_scale(x: &Tensor2D, plan: &TransformPlan) -> Result<(Tensor2D, Vec<f64>)> {
    plan.check_dim(x.cols(), "activation")?;
    let (centered, mu) = if plan.center {
        let mu = channel_means(x);
        (sub_row_vector(x, &mu)?, mu)
    } else {
        (x.clone(), vec![0.0; x.cols()])
    };
    let scaled = if plan.scale {
        let inv: Vec<f64> = plan.sigma.iter().map(|s| 1.0 / s).collect();
        scale_columns(&centered, &inv)?
    } else {
        centered
    };
    Ok((scaled, mu))
}

/// `X~ = (X - mu)·diag(1/sigma)·H`, returning `X~` and the `mu` that was removed
/// (all zeros when centering is off).
pub fn forward_transform(x: &Tensor2D, plan: &TransformPlan) -> Result<(Tensor2D, Vec<f64>)> {
    let (y, mu) = center_and_scale(x, plan)?;
    let y = if plan.hadamard { fwht_rows(&y)? } else { y };
    Ok((y, mu))
}

/// Left-multiplies by `H^T = H`, i.e. transforms every column of `w`.
fn hadamard_columns(w: &Tensor2D) -> Result<Tensor2D> {
    Ok(fwht_rows(&w.transpose())?.transpose())
}

/// `W~ = H^T·diag(sigma)·W`.
pub fn fuse_weights(w: &Tensor2D, plan: &TransformPlan) -> Result<Tensor2D> {
    plan.check_dim(w.rows(), "weight")?;
    let scaled = if plan.scale {
        scale_rows(w, &plan.sigma)?
    } else {
        w.clone()
    };
    if plan.hadamard {
        hadamard_columns(&scaled)
    } else {
        Ok(scaled)
    }
}

/// `b + (mu·diag(1/sigma)·H)·W~` where `W~` is the weight actually used at
/// inference (dequantized when weights are quantized).
pub fn effective_bias(
    b: &[f64],
    mu: &[f64],
    plan: &TransformPlan,
    w_tilde: &Tensor2D,
) -> Result<Vec<f64>> {
    plan.check_dim(mu.len(), "mean vector")?;
    plan.check_dim(w_tilde.rows(), "fused weight")?;
    if b.len() != w_tilde.cols() {
        return Err(Error::dim(format!(
            "bias length {} vs {} output channels",
            b.len(),
            w_tilde.cols()
        )));
    }
    if !plan.center {
        return Ok(b.to_vec());
    }
    let mut v: Vec<f64> = if plan.scale {
        mu.iter().zip(&plan.sigma).map(|(m, s)| m / s).collect()
    } else {
        mu.to_vec()
    };
    if plan.hadamard {
        fwht_in_place(&mut v)?;
    }
    let corr = vecmat(&v, w_tilde)?;
    Ok(b.iter().zip(corr).map(|(bi, ci)| bi + ci).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fwht::naive_hadamard;
    use crate::rng::SeededRng;
    use crate::tensor::{add_row_vector, channel_absmax, matmul};

    fn randn(rows: usize, cols: usize, seed: u64) -> Tensor2D {
        let mut rng = SeededRng::new(seed, 0);
        Tensor2D::from_fn(rows, cols, |_, _| rng.standard_normal()).unwrap()
    }

    fn row_absmax(w: &Tensor2D) -> Vec<f64> {
        channel_absmax(&w.transpose())
    }

    fn plan_for(preset: TransformPreset, x: &Tensor2D, w: &Tensor2D, alpha: f64) -> TransformPlan {
        preset_to_plan(preset, &channel_absmax(x), &row_absmax(w), alpha).unwrap()
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(compute_sigma(&[4.0], &[1.0], 0.5, 1e-5).unwrap(), vec![2.0]);
        let s = compute_sigma(&[3.0, 0.0], &[7.0, 9.0], 1.0, 1e-5).unwrap();
        assert_eq!(s, vec![3.0, 1e-5]);
        let s = compute_sigma(&[0.0], &[0.0], 0.5, 1e-5).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-15);
        assert!(matches!(compute_sigma(&[1.0], &[1.0], 1.5, 1e-5), Err(Error::Parameter(_))));
        assert!(matches!(compute_sigma(&[1.0], &[1.0], -0.1, 1e-5), Err(Error::Parameter(_))));
        assert!(compute_sigma(&[1.0, 2.0], &[1.0], 0.5, 1e-5).is_err());
    }

    #[test]
    fn preset_flags() {
        let a = [1.0, 2.0];
        let w = [1.0, 1.0];
        let q = preset_to_plan(TransformPreset::QuaRot, &a, &w, 0.5).unwrap();
        assert_eq!((q.center(), q.scale(), q.hadamard()), (false, false, true));
        assert_eq!(q.sigma(), &[1.0, 1.0]);
        let s = preset_to_plan(TransformPreset::Sdcb, &a, &w, 0.5).unwrap();
        assert_eq!((s.center(), s.scale(), s.hadamard()), (false, true, true));
        let h = preset_to_plan(TransformPreset::HadaNorm, &a, &w, 0.5).unwrap();
        assert_eq!((h.center(), h.scale(), h.hadamard()), (true, true, true));
        assert_eq!(TransformPreset::DynCenter.flags(), (true, false, false));
        assert_eq!(TransformPreset::SmoothQuant.flags(), (false, true, false));
        assert_eq!(TransformPreset::None.flags(), (false, false, false));
    }

    #[test]
    fn preset_names_round_trip() {
        for p in TransformPreset::ALL {
            assert_eq!(p.name().parse::<TransformPreset>().unwrap(), p);
        }
        assert!("rotate".parse::<TransformPreset>().is_err());
    }

    #[test]
    fn plan_validation() {
        assert!(TransformPlan::new(false, false, false, vec![2.0], 0.5, 1e-5).is_err());
        assert!(TransformPlan::new(false, true, false, vec![1e-9], 0.5, 1e-5).is_err());
        assert!(matches!(
            TransformPlan::new(false, false, true, vec![1.0; 6], 0.5, 1e-5),
            Err(Error::NotPowerOfTwo { len: 6 })
        ));
    }

    #[test]
    fn identity_plan_is_identity() {
        let x = randn(5, 4, 1);
        let (y, mu) = forward_transform(&x, &TransformPlan::identity(4)).unwrap();
        assert_eq!(y, x);
        assert_eq!(mu, vec![0.0; 4]);
        let w = randn(4, 3, 2);
        assert_eq!(fuse_weights(&w, &TransformPlan::identity(4)).unwrap(), w);
    }

    #[test]
    fn centering_only() {
        let x = Tensor2D::from_rows(&[[1.0, 3.0], [3.0, 5.0]]).unwrap();
        let plan = plan_for(TransformPreset::DynCenter, &x, &Tensor2D::identity(2), 0.5);
        let (y, mu) = forward_transform(&x, &plan).unwrap();
        assert_eq!(mu, vec![2.0, 4.0]);
        assert_eq!(y.data(), &[-1.0, -1.0, 1.0, 1.0]);
    }

    #[test]
    fn smoothquant_row_scaling() {
        let plan = TransformPlan::new(false, true, false, vec![2.0, 3.0], 0.5, 1e-5).unwrap();
        let w = Tensor2D::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert_eq!(fuse_weights(&w, &plan).unwrap().data(), &[2.0, 2.0, 3.0, 3.0]);
    }

    #[test]
    fn bias_examples() {
        let w = Tensor2D::identity(2);
        let off = TransformPlan::identity(2);
        assert_eq!(effective_bias(&[0.5, -1.0], &[0.0, 0.0], &off, &w).unwrap(), vec![0.5, -1.0]);
        let dc = TransformPlan::new(true, false, false, vec![1.0; 2], 0.0, 1e-5).unwrap();
        assert_eq!(effective_bias(&[0.0, 0.0], &[1.0, 1.0], &dc, &w).unwrap(), vec![1.0, 1.0]);
        assert!(effective_bias(&[0.0; 3], &[1.0, 1.0], &dc, &w).is_err());
    }

    // Undo each step explicitly with dense matrices.
    #[test]
    fn hadanorm_forward_inverts_step_by_step() {
        let x = randn(8, 8, 3);
        let w = randn(8, 8, 4);
        let plan = plan_for(TransformPreset::HadaNorm, &x, &w, 0.5);
        let (y, mu) = forward_transform(&x, &plan).unwrap();
        let h = naive_hadamard(HadamardSize::new(8).unwrap()).unwrap();
        let unrot = matmul(&y, &h.transpose()).unwrap();
        let unscaled = scale_columns(&unrot, plan.sigma()).unwrap();
        let back = add_row_vector(&unscaled, &mu).unwrap();
        assert!(back.sub(&x).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn fused_product_matches_centered_product() {
        let x = randn(16, 16, 5);
        let w = randn(16, 4, 6);
        let plan = plan_for(TransformPreset::HadaNorm, &x, &w, 0.5);
        let (xt, mu) = forward_transform(&x, &plan).unwrap();
        let lhs = matmul(&xt, &fuse_weights(&w, &plan).unwrap()).unwrap();
        let rhs = matmul(&sub_row_vector(&x, &mu).unwrap(), &w).unwrap();
        assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn end_to_end_identity_8x8() {
        let x = randn(8, 8, 7);
        let w = randn(8, 8, 8);
        let b: Vec<f64> = (0..8).map(|i| i as f64 * 0.25 - 1.0).collect();
        let plan = plan_for(TransformPreset::HadaNorm, &x, &w, 0.5);
        let (xt, mu) = forward_transform(&x, &plan).unwrap();
        let wt = fuse_weights(&w, &plan).unwrap();
        let bt = effective_bias(&b, &mu, &plan, &wt).unwrap();
        let got = add_row_vector(&matmul(&xt, &wt).unwrap(), &bt).unwrap();
        let want = add_row_vector(&matmul(&x, &w).unwrap(), &b).unwrap();
        assert!(got.sub(&want).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn centered_intermediate_has_zero_means() {
        let mut x = randn(32, 16, 9);
        x = add_row_vector(&x, &[5.0; 16]).unwrap();
        let w = randn(16, 4, 10);
        let plan = plan_for(TransformPreset::HadaNorm, &x, &w, 0.5);
        let (pre, _) = center_and_scale(&x, &plan).unwrap();
        for m in channel_means(&pre) {
            assert!(m.abs() < 1e-10);
        }
    }

    #[test]
    fn alpha_zero_unit_weights_degrades_to_center_plus_rotation() {
        let x = randn(8, 8, 11);
        let plan = preset_to_plan(TransformPreset::HadaNorm, &channel_absmax(&x), &[1.0; 8], 0.0).unwrap();
        assert!(plan.sigma().iter().all(|s| (s - 1.0).abs() < 1e-12));
        let reference = TransformPlan::new(true, false, true, vec![1.0; 8], 0.0, 1e-5).unwrap();
        let (a, _) = forward_transform(&x, &plan).unwrap();
        let (b, _) = forward_transform(&x, &reference).unwrap();
        assert!(a.sub(&b).unwrap().max_abs() < 1e-12);
    }

    // Guards the fixed step order: rotating before scaling gives a different X~.
    #[test]
    fn scale_then_rotate_order_matters() {
        let x = randn(8, 8, 12);
        let w = randn(8, 8, 13);
        let plan = plan_for(TransformPreset::Sdcb, &x, &w, 0.5);
        let (ours, _) = forward_transform(&x, &plan).unwrap();
        let inv: Vec<f64> = plan.sigma().iter().map(|s| 1.0 / s).collect();
        let swapped = scale_columns(&fwht_rows(&x).unwrap(), &inv).unwrap();
        assert!(ours.sub(&swapped).unwrap().max_abs() > 1e-3);
    }

    #[test]
    fn dimension_mismatches() {
        let plan = TransformPlan::identity(4);
        assert!(forward_transform(&randn(2, 3, 1), &plan).is_err());
        assert!(fuse_weights(&randn(3, 2, 1), &plan).is_err());
        let had = TransformPlan::new(false, false, true, vec![1.0; 4], 0.0, 1e-5).unwrap();
        assert!(forward_transform(&randn(2, 8, 1), &had).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn exact_for_every_preset(
                k in 1u32..=7,
                s in 1usize..=64,
                m in 1usize..=64,
                seed in 0u64..10_000,
                pi in 0usize..6,
                alpha in 0.0f64..=1.0,
            ) {
                let d = 1usize << k;
                let preset = TransformPreset::ALL[pi];
                let mut rng = SeededRng::new(seed, 0);
                let x = Tensor2D::from_fn(s, d, |_, c| 3.0 * rng.standard_normal() + c as f64 * 0.1).unwrap();
                let w = Tensor2D::from_fn(d, m, |_, _| rng.standard_normal()).unwrap();
                let b: Vec<f64> = (0..m).map(|_| rng.standard_normal()).collect();
                let plan = plan_for(preset, &x, &w, alpha);
                let (xt, mu) = forward_transform(&x, &plan).unwrap();
                let wt = fuse_weights(&w, &plan).unwrap();
                let bt = effective_bias(&b, &mu, &plan, &wt).unwrap();
                let got = add_row_vector(&matmul(&xt, &wt).unwrap(), &bt).unwrap();
                let want = add_row_vector(&matmul(&x, &w).unwrap(), &b).unwrap();
                let rel = got.sub(&want).unwrap().frobenius_norm() / want.frobenius_norm();
                prop_assert!(rel <= 1e-9, "rel error {rel}");
            }
        }
    }
}
