//! Error and distribution metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{channel_stats, Tensor2D};

/// Reported SQNR when the error energy is negligible (`< 1e-30` of the signal).
pub const SQNR_CAP_DB: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub sqnr_db: f64,
    pub max_abs_err: f64,
    pub rel_fro_err: f64,
    pub n_elements: usize,
}

fn check_shapes(reference: &Tensor2D, test: &Tensor2D) -> Result<()> {
    if reference.shape() != test.shape() {
        return Err(Error::dim(format!(
            "reference {:?} vs test {:?}",
            reference.shape(),
            test.shape()
        )));
    }
    Ok(())
}

fn energies(reference: &Tensor2D, test: &Tensor2D) -> (f64, f64) {
    reference
        .data()
        .iter()
        .zip(test.data())
        .fold((0.0, 0.0), |(s, n), (&r, &t)| (s + r * r, n + (r - t) * (r - t)))
}

/// Signal-to-quantization-noise ratio `10·log10(|ref|² / |ref - test|²)` in dB.
pub fn sqnr(reference: &Tensor2D, test: &Tensor2D) -> Result<f64> {
    check_shapes(reference, test)?;
    let (signal, noise) = energies(reference, test);
    sqnr_from_energies(signal, noise)
}

fn sqnr_from_energies(signal: f64, noise: f64) -> Result<f64> {
    if signal == 0.0 {
        return Err(Error::UndefinedSignal);
    }
    if noise < 1e-30 * signal {
        return Ok(SQNR_CAP_DB);
    }
    Ok(10.0 * (signal / noise).log10())
}

pub fn error_report(reference: &Tensor2D, test: &Tensor2D) -> Result<ErrorReport> {
    check_shapes(reference, test)?;
    let (signal, noise) = energies(reference, test);
    let max_abs_err = reference
        .data()
        .iter()
        .zip(test.data())
        .fold(0.0_f64, |m, (r, t)| m.max((r - t).abs()));
    Ok(ErrorReport {
        sqnr_db: sqnr_from_energies(signal, noise)?,
        max_abs_err,
        rel_fro_err: (noise / signal).sqrt(),
        n_elements: reference.data().len(),
    })
}

/// Diagnostic Gaussianity score: mean |excess kurtosis| over channels plus
/// the (population) variance of the channel means. Lower is whiter; 0 for
/// equal-mean Gaussian channels in the large-sample limit.
pub fn whitening_score(x: &Tensor2D) -> f64 {
    let st = channel_stats(x);
    let d = st.n_channels as f64;
    let kurt = st.excess_kurtosis.iter().map(|k| k.abs()).sum::<f64>() / d;
    let grand = st.mean.iter().sum::<f64>() / d;
    let spread = st.mean.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / d;
    kurt + spread
}
