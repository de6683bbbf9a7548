//! Numerical identity checks run by the `self-test` subcommand.

use crate::error::{Error, Result};
use crate::fwht::{fwht_rows, naive_hadamard, HadamardSize};
use crate::harness::bench::random_tensor;
use crate::tensor::{add_row_vector, channel_absmax, matmul, Tensor2D};
use crate::transforms::{effective_bias, forward_transform, fuse_weights, preset_to_plan, TransformPreset};

pub const SELF_TEST_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub max_abs_err: f64,
}

fn max_diff(a: &Tensor2D, b: &Tensor2D) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Runs every check, then fails with [`Error::Contract`] naming the first
/// check whose error exceeds `tol`.
pub fn run_self_test(seed: u64, tol: f64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let d = 16;
    let x = random_tensor(64, d, seed)?.map(|v| 3.0 * v + 1.5)?;
    let w = random_tensor(d, 8, seed.wrapping_add(1))?;
    let b: Vec<f64> = (0..8).map(|i| 0.1 * i as f64).collect();
    let reference = add_row_vector(&matmul(&x, &w)?, &b)?;

    let dense = naive_hadamard(HadamardSize::new(d)?)?;
    checks.push(Check {
        name: "fwht_vs_dense".into(),
        max_abs_err: max_diff(&fwht_rows(&x)?, &matmul(&x, &dense)?),
    });

    let x_abs = channel_absmax(&x);
    let w_abs: Vec<f64> = (0..d).map(|r| w.row(r).iter().fold(0.0_f64, |m, v| m.max(v.abs()))).collect();
    for preset in TransformPreset::ALL {
        let plan = preset_to_plan(preset, &x_abs, &w_abs, 0.5)?;
        let (xt, mu) = forward_transform(&x, &plan)?;
        let wt = fuse_weights(&w, &plan)?;
        let bt = effective_bias(&b, &mu, &plan, &wt)?;
        let y = add_row_vector(&matmul(&xt, &wt)?, &bt)?;
        checks.push(Check {
            name: format!("fused_output_{preset}"),
            max_abs_err: max_diff(&y, &reference),
        });
    }

    if let Some(bad) = checks.iter().find(|c| c.max_abs_err.is_nan() || c.max_abs_err > tol) {
        return Err(Error::Contract(format!(
            "{} error {:e} exceeds {:e}",
            bad.name, bad.max_abs_err, tol
        )));
    }
    Ok(checks)
}
