//! FWHT kernel throughput.

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::error::Result;
use crate::fwht::{fwht_rows, fwht_rows_serial};
use crate::harness::synth::derive_seed;
use crate::rng::SeededRng;
use crate::tensor::Tensor2D;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FwhtTiming {
    pub rows: usize,
    pub d: usize,
    pub parallel: bool,
    /// Best wall time over the repeats.
    pub seconds: f64,
    pub melem_per_s: f64,
}

pub fn default_fwht_sizes() -> Vec<(usize, usize)> {
    vec![(1024, 64), (1024, 256), (1024, 1024), (1024, 4096), (4096, 4096)]
}

pub fn random_tensor(rows: usize, cols: usize, seed: u64) -> Result<Tensor2D> {
    let mut rng = SeededRng::new(derive_seed(seed, 0xf3), 0);
    let data = (0..rows * cols).map(|_| rng.standard_normal()).collect();
    Tensor2D::new(rows, cols, data)
}

/// Times `fwht_rows_serial` and `fwht_rows` on each `(rows, d)`.
pub fn fwht_bench(sizes: &[(usize, usize)], repeats: usize, seed: u64) -> Result<Vec<FwhtTiming>> {
    let repeats = repeats.max(1);
    let mut out = Vec::new();
    for &(rows, d) in sizes {
        let x = random_tensor(rows, d, seed)?;
        for parallel in [false, true] {
            let mut best = f64::INFINITY;
            for _ in 0..repeats {
                let t = Instant::now();
                let y = if parallel { fwht_rows(&x)? } else { fwht_rows_serial(&x)? };
                best = best.min(t.elapsed().as_secs_f64());
                std::hint::black_box(y);
            }
            out.push(FwhtTiming {
                rows,
                d,
                parallel,
                seconds: best,
                melem_per_s: (rows * d) as f64 / best.max(1e-12) / 1e6,
            });
        }
    }
    Ok(out)
}

pub fn timings_csv(t: &[FwhtTiming]) -> String {
    let mut s = String::from("rows,d,parallel,seconds,melem_per_s\n");
    for r in t {
        let _ = writeln!(s, "{},{},{},{},{}", r.rows, r.d, r.parallel, r.seconds, r.melem_per_s);
    }
    s
}
