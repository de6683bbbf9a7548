//! Acceptance gate. Runs criteria 1-9 in order, prints one PASS/FAIL line
//! each and exits non-zero if any fails.

// Negated comparisons make NaN count as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use centerquant::fwht::fwht_rows_serial;
use centerquant::harness::config::ExperimentConfig;
use centerquant::harness::{channel_study, default_alpha_grid, four_channel_spec};
use centerquant::quant::{dequantize, fake_quant};
use centerquant::rng::SeededRng;
use centerquant::transforms::preset_to_plan;
use centerquant::{
    fwht_rows, naive_hadamard, quantize_activations, quantize_weights_blocked, run_quantized,
    HadamardSize, LinearLayer, QuantConfig, QuantSite, Tensor2D, TransformPreset,
};

type Outcome = Result<String, String>;

fn dense_h(d: usize) -> Vec<f64> {
    let norm = 1.0 / (d as f64).sqrt();
    let mut h = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            h[i * d + j] = if (i & j).count_ones() % 2 == 0 { norm } else { -norm };
        }
    }
    h
}

fn mm(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for p in 0..k {
            let av = a[i * k + p];
            for j in 0..m {
                out[i * m + j] += av * b[p * m + j];
            }
        }
    }
    out
}

fn rel_frobenius(reference: &[f64], test: &[f64]) -> f64 {
    let num: f64 = reference.iter().zip(test).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = reference.iter().map(|a| a * a).sum();
    (num / den).sqrt()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Channels with offsets, spreads and a few outlier channels.
fn activations(rng: &mut SeededRng, s: usize, d: usize) -> Tensor2D {
    let means: Vec<f64> = (0..d).map(|_| rng.uniform_range(-5.0, 5.0)).collect();
    let stds: Vec<f64> = (0..d)
        .map(|_| rng.uniform_range(0.1, 3.0) * if rng.bernoulli(0.1) { 40.0 } else { 1.0 })
        .collect();
    let data = (0..s * d).map(|i| means[i % d] + stds[i % d] * rng.standard_normal()).collect();
    Tensor2D::new(s, d, data).unwrap()
}

fn gaussian(rng: &mut SeededRng, r: usize, c: usize, std: f64) -> Tensor2D {
    Tensor2D::new(r, c, (0..r * c).map(|_| std * rng.standard_normal()).collect()).unwrap()
}

fn absmax_rows(w: &Tensor2D) -> Vec<f64> {
    (0..w.rows()).map(|r| w.row(r).iter().fold(0.0_f64, |m, v| m.max(v.abs()))).collect()
}

fn col_absmax(x: &Tensor2D) -> Vec<f64> {
    (0..x.cols()).map(|c| x.column(c).iter().fold(0.0_f64, |m, v| m.max(v.abs()))).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = SeededRng::new(0xacc1, 0);
    let mut worst = 0.0_f64;
    for case in 0..200 {
        let preset = TransformPreset::ALL[rng.index(6)];
        let d = 1usize << (1 + rng.index(7));
        let (s, m) = (1 + rng.index(64), 1 + rng.index(64));
        let x = activations(&mut rng, s, d);
        let w = gaussian(&mut rng, d, m, 0.5);
        let b: Vec<f64> = (0..m).map(|_| rng.standard_normal()).collect();
        let alpha = rng.uniform();
        let plan = preset_to_plan(preset, &col_absmax(&x), &absmax_rows(&w), alpha).map_err(|e| e.to_string())?;
        let layer = LinearLayer::new("L", w.clone(), b.clone()).unwrap();
        let site = QuantSite::new(layer, plan, None, None).unwrap();
        let y = run_quantized(&x, &site).map_err(|e| e.to_string())?;
        let mut reference = mm(x.data(), w.data(), s, d, m);
        for (i, v) in reference.iter_mut().enumerate() {
            *v += b[i % m];
        }
        let err = rel_frobenius(&reference, y.data());
        worst = worst.max(err);
        if !(err <= 1e-9) {
            return Err(format!("case {case}: {preset} d={d} s={s} m={m} relative error {err:e}"));
        }
    }
    let t = start.elapsed();
    if t > Duration::from_secs(10) {
        return Err(format!("took {t:?} (limit 10 s)"));
    }
    Ok(format!("200 cases, worst relative error {worst:.2e}, {:.2} s", t.as_secs_f64()))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = SeededRng::new(0xacc2, 0);
    let mut worst = 0.0_f64;
    for k in 0..=10 {
        let d = 1usize << k;
        let h = dense_h(d);
        let dense = naive_hadamard(HadamardSize::new(d).unwrap()).unwrap();
        if max_abs_diff(dense.data(), &h) > 1e-15 {
            return Err(format!("naive_hadamard differs from the sign-parity matrix at d={d}"));
        }
        for t in 0..10 {
            let rows = 1 + rng.index(8);
            let std = 1.0 + rng.uniform() * 10.0;
            let x = gaussian(&mut rng, rows, d, std);
            let y = fwht_rows(&x).unwrap();
            let oracle = mm(x.data(), &h, rows, d, d);
            let e_oracle = max_abs_diff(y.data(), &oracle);
            let e_inv = max_abs_diff(fwht_rows(&y).unwrap().data(), x.data());
            let mut e_parseval = 0.0_f64;
            for r in 0..rows {
                let nx: f64 = x.row(r).iter().map(|v| v * v).sum();
                let ny: f64 = y.row(r).iter().map(|v| v * v).sum();
                e_parseval = e_parseval.max((nx - ny).abs() / nx.max(1.0));
            }
            let e = e_oracle.max(e_inv).max(e_parseval);
            worst = worst.max(e);
            if !(e <= 1e-10) {
                return Err(format!(
                    "d={d} tensor {t}: oracle {e_oracle:e}, involution {e_inv:e}, parseval {e_parseval:e}"
                ));
            }
        }
    }
    let t = start.elapsed();
    if t > Duration::from_secs(5) {
        return Err(format!("took {t:?} (limit 5 s)"));
    }
    Ok(format!("d=1..1024, 110 tensors, worst error {worst:.2e}, {:.2} s", t.as_secs_f64()))
}

fn criterion_3() -> Outcome {
    let strategy = (1usize..300, 1usize..40, 2u8..=8, any::<u64>(), 0.01f64..100.0, 0u8..3);
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    let result = runner.run(&strategy, |(rows, cols, bits, seed, spread, shape)| {
        let mut rng = SeededRng::new(seed, 3);
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| {
                let v = spread * rng.standard_normal();
                match shape {
                    0 => v,
                    1 => v + 10.0 * spread,
                    _ => (v * 4.0).round() / 4.0,
                }
            })
            .collect();
        let x = Tensor2D::new(rows, cols, data).unwrap();
        let fail = |m: String| Err(TestCaseError::fail(m));

        let qa = quantize_activations(&x, bits).unwrap();
        let top = ((1i64 << bits) - 1) as i32;
        let deq = dequantize(&qa);
        for r in 0..rows {
            let row = x.row(r);
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let scale = qa.scales[r];
            if qa.zero_points[r] != lo {
                return fail(format!("row {r}: zero point {} != min {lo}", qa.zero_points[r]));
            }
            if hi > lo {
                let grid_top = lo + top as f64 * scale;
                if (grid_top - hi).abs() > 1e-12 * hi.abs().max(lo.abs()).max(1.0) {
                    return fail(format!("row {r}: grid top {grid_top} != max {hi}"));
                }
            }
            for c in 0..cols {
                let code = qa.code(r, c);
                if !(0..=top).contains(&code) {
                    return fail(format!("activation code {code} outside [0, {top}]"));
                }
                let e = (x.get(r, c) - deq.get(r, c)).abs();
                if e > scale / 2.0 * (1.0 + 1e-9) + 1e-12 * lo.abs().max(hi.abs()) {
                    return fail(format!("activation error {e} > half step {}", scale / 2.0));
                }
            }
        }

        let qw = quantize_weights_blocked(&x, bits, 128).unwrap();
        let qmax = ((1i32 << (bits - 1)) - 1) as f64;
        let blocks = rows.div_ceil(128);
        let deq = dequantize(&qw);
        let mut members = vec![0usize; qw.n_groups()];
        for r in 0..rows {
            for c in 0..cols {
                members[qw.group_of(r, c)] += 1;
                if qw.group_of(r, c) != qw.group_of(r - r % 128, c) {
                    return fail(format!("row {r} not grouped with its 128-row block"));
                }
            }
        }
        if qw.n_groups() != blocks * cols {
            return fail(format!("{} groups, expected {}", qw.n_groups(), blocks * cols));
        }
        for c in 0..cols {
            for b in 0..blocks {
                let (r0, r1) = (b * 128, ((b + 1) * 128).min(rows));
                let g = qw.group_of(r0, c);
                if members[g] != r1 - r0 {
                    return fail(format!("group {g} has {} rows, expected {}", members[g], r1 - r0));
                }
                let absmax = (r0..r1).map(|r| x.get(r, c).abs()).fold(0.0_f64, f64::max);
                let expected = (absmax / qmax).max(centerquant::quant::SCALE_FLOOR);
                if qw.scales[g] != expected {
                    return fail(format!("block scale {} != absmax/qmax {expected}", qw.scales[g]));
                }
                for r in r0..r1 {
                    let code = qw.code(r, c);
                    if (code as f64).abs() > qmax {
                        return fail(format!("weight code {code} outside +-{qmax}"));
                    }
                    let e = (x.get(r, c) - deq.get(r, c)).abs();
                    if e > expected / 2.0 * (1.0 + 1e-9) + 1e-15 * absmax {
                        return fail(format!("weight error {e} > half step {}", expected / 2.0));
                    }
                }
            }
        }
        Ok(())
    });
    match result {
        Ok(()) => Ok("1000 random tensors, 0 violations".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn criterion_4() -> Outcome {
    let mut rng = SeededRng::new(0xacc4, 0);
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for preset in [TransformPreset::HadaNorm, TransformPreset::Sdcb, TransformPreset::DynCenter] {
        for &(d, s, m) in &[(64, 48, 24), (256, 40, 16), (512, 20, 33)] {
            let x = activations(&mut rng, s, d);
            let w = gaussian(&mut rng, d, m, 0.3);
            let b: Vec<f64> = (0..m).map(|_| rng.standard_normal()).collect();
            let plan = preset_to_plan(preset, &col_absmax(&x), &absmax_rows(&w), 0.5).unwrap();
            let wq = QuantConfig::per_block(4, 128).unwrap();
            let layer = LinearLayer::new("L", w.clone(), b.clone()).unwrap();
            let site = QuantSite::new(layer, plan.clone(), None, Some(wq)).unwrap();
            let y = run_quantized(&x, &site).map_err(|e| e.to_string())?;

            // Dense reference: mu, diag(1/sigma) and H built here.
            let mu: Vec<f64> = (0..d).map(|c| x.column(c).iter().sum::<f64>() / s as f64).collect();
            let inv: Vec<f64> = plan.sigma().iter().map(|v| 1.0 / v).collect();
            let h = if plan.hadamard() { dense_h(d) } else { identity(d) };
            let mut sw = w.data().to_vec();
            for r in 0..d {
                for c in 0..m {
                    sw[r * m + c] *= plan.sigma()[r];
                }
            }
            let ht = transpose(&h, d);
            let w_fused = Tensor2D::new(d, m, mm(&ht, &sw, d, d, m)).unwrap();
            let w_dq = fake_quant(&w_fused, &wq).unwrap();
            let centered: Vec<f64> = (0..s * d).map(|i| (x.data()[i] - mu[i % d]) * inv[i % d]).collect();
            let x_t = mm(&centered, &h, s, d, d);
            let mut reference = mm(&x_t, w_dq.data(), s, d, m);
            let mu_scaled: Vec<f64> = (0..d).map(|i| mu[i] * inv[i]).collect();
            let mu_h = mm(&mu_scaled, &h, 1, d, d);
            let shift = mm(&mu_h, w_dq.data(), 1, d, m);
            for (i, v) in reference.iter_mut().enumerate() {
                *v += b[i % m] + shift[i % m];
            }
            let e = max_abs_diff(&reference, y.data());
            worst = worst.max(e);
            cases += 1;
            if !(e <= 1e-9) {
                return Err(format!("{preset} d={d}: max abs error {e:e}"));
            }
        }
    }
    Ok(format!("{cases} cases, worst max abs error {worst:.2e}"))
}

fn identity(d: usize) -> Vec<f64> {
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    v
}

fn transpose(a: &[f64], d: usize) -> Vec<f64> {
    let mut t = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            t[j * d + i] = a[i * d + j];
        }
    }
    t
}

fn criterion_5() -> Outcome {
    let grid = default_alpha_grid();
    let mut lines = Vec::new();
    for seed in 0..3 {
        let st = channel_study(&four_channel_spec(), 4096, seed, 4, &grid, 1e-5).map_err(|e| e.to_string())?;
        let get = |p| st.sqnr(p).unwrap();
        let hn = get(TransformPreset::HadaNorm);
        for p in [TransformPreset::QuaRot, TransformPreset::DynCenter, TransformPreset::SmoothQuant] {
            if !(hn > get(p)) {
                return Err(format!("seed {seed}: hadanorm {hn:.2} dB not above {p} {:.2} dB", get(p)));
            }
        }
        let gain = hn - get(TransformPreset::None);
        if !(gain >= 3.0) {
            return Err(format!("seed {seed}: hadanorm gain over none {gain:.2} dB < 3 dB"));
        }
        if !(st.whitening_hadanorm < st.whitening_raw) {
            return Err(format!(
                "seed {seed}: whitening {:.3} not below raw {:.3}",
                st.whitening_hadanorm, st.whitening_raw
            ));
        }
        lines.push(format!("seed {seed} +{gain:.1} dB"));
    }
    Ok(lines.join(", "))
}

struct Row {
    preset: String,
    site: String,
    seed: u64,
    sqnr: f64,
}

fn read_rows(path: &Path) -> Vec<Row> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            Row {
                preset: f[0].into(),
                site: f[1].into(),
                seed: f[2].parse().unwrap(),
                sqnr: f[3].parse().unwrap(),
            }
        })
        .collect()
}

fn seed_means(rows: &[Row]) -> BTreeMap<(String, String), f64> {
    let mut acc: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry((r.preset.clone(), r.site.clone())).or_default();
        e.0 += r.sqnr;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

struct Run {
    elapsed: Duration,
    csv: Vec<u8>,
    json: Vec<u8>,
    rows: Vec<Row>,
}

fn cli(sub: &str, out: &Path) -> Result<Run, String> {
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_centerquant"))
        .args([sub, "--out"])
        .arg(out)
        .args(["--format", "csv,json"])
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    if !status.status.success() {
        return Err(format!("{sub} failed: {}", String::from_utf8_lossy(&status.stderr)));
    }
    let stem = if sub == "ablate" { "ablation" } else { "bench" };
    let csv_path = out.join(format!("{stem}.csv"));
    Ok(Run {
        elapsed,
        csv: std::fs::read(&csv_path).map_err(|e| e.to_string())?,
        json: std::fs::read(out.join(format!("{stem}.json"))).map_err(|e| e.to_string())?,
        rows: read_rows(&csv_path),
    })
}

fn criterion_6(run: &Run) -> Outcome {
    let cfg = ExperimentConfig::default();
    let image: Vec<String> = cfg.sites.iter().filter(|s| !s.text_stream).map(|s| s.id.as_str().to_string()).collect();
    let all: Vec<String> = cfg.sites.iter().map(|s| s.id.as_str().to_string()).collect();
    let get = |p: &str, site: &str, seed: u64| {
        run.rows.iter().find(|r| r.preset == p && r.site == site && r.seed == seed).map(|r| r.sqnr)
    };
    let mut pairs = 0;
    for seed in cfg.seeds() {
        for site in &image {
            let (hn, none) = (get("hadanorm", site, seed), get("none", site, seed));
            match (hn, none) {
                (Some(h), Some(n)) if h > n => pairs += 1,
                (Some(h), Some(n)) => return Err(format!("seed {seed} {site}: hadanorm {h:.2} <= none {n:.2}")),
                _ => return Err(format!("missing row for seed {seed} {site}")),
            }
        }
    }
    let means = seed_means(&run.rows);
    let over: Vec<&String> = all
        .iter()
        .filter(|s| means[&("hadanorm".to_string(), (*s).clone())] > means[&("sdcb".to_string(), (*s).clone())])
        .collect();
    let frac = over.len() as f64 / all.len() as f64;
    if frac < 0.8 {
        return Err(format!("hadanorm mean above sdcb on {}/{} sites", over.len(), all.len()));
    }
    if run.elapsed > Duration::from_secs(60) {
        return Err(format!("ablation took {:?} (limit 60 s)", run.elapsed));
    }
    Ok(format!(
        "hadanorm > none on {pairs}/{pairs} (image site, seed) pairs; mean > sdcb on {}/{} sites; {:.1} s",
        over.len(),
        all.len(),
        run.elapsed.as_secs_f64()
    ))
}

fn criterion_7(run: &Run) -> Outcome {
    let means = seed_means(&run.rows);
    let m = |p: &str| means[&(p.to_string(), "block".to_string())];
    let (hn, sdcb, quarot, sq, none, dyn_c) =
        (m("hadanorm"), m("sdcb"), m("quarot"), m("smoothquant"), m("none"), m("dyncenter"));
    let table = format!(
        "hadanorm {hn:.2}, sdcb {sdcb:.2}, quarot {quarot:.2}, smoothquant {sq:.2}, none {none:.2}, dyncenter {dyn_c:.2} dB"
    );
    if !(hn > sdcb && sdcb > quarot && quarot > sq && quarot > none) {
        return Err(format!("ordering violated: {table}"));
    }
    if !((dyn_c - none).abs() <= 1.0 && dyn_c < quarot) {
        return Err(format!("dyncenter not within 1 dB of none and below quarot: {table}"));
    }
    Ok(table)
}

fn criterion_8(a: &Run, b: &Run, c: &Run, d: &Run) -> Outcome {
    for (name, x, y) in [("ablation", a, b), ("bench", c, d)] {
        if x.csv != y.csv {
            return Err(format!("{name} CSV differs between runs"));
        }
        if x.json != y.json {
            return Err(format!("{name} JSON differs between runs"));
        }
    }
    Ok(format!(
        "ablation {} + {} bytes, bench {} + {} bytes identical across runs",
        a.csv.len(),
        a.json.len(),
        c.csv.len(),
        c.json.len()
    ))
}

fn criterion_9(bench: &Run) -> Outcome {
    let mut rng = SeededRng::new(0xacc9, 0);
    let x = gaussian(&mut rng, 1024, 4096, 1.0);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let y = pool.install(|| fwht_rows(&x)).unwrap();
    let t_pool = start.elapsed();
    let start = Instant::now();
    let y_serial = fwht_rows_serial(&x).unwrap();
    let t_serial = start.elapsed();
    if y != y_serial {
        return Err("serial and pooled transforms differ".into());
    }
    let t = t_pool.max(t_serial);
    if t > Duration::from_secs(1) {
        return Err(format!("fwht_rows 1024x4096 took {t:?} (limit 1 s)"));
    }
    if bench.elapsed > Duration::from_secs(120) {
        return Err(format!("bench took {:?} (limit 120 s)", bench.elapsed));
    }
    Ok(format!(
        "fwht_rows 1024x4096 single-threaded {:.3} s; bench default config {:.1} s",
        t.as_secs_f64(),
        bench.elapsed.as_secs_f64()
    ))
}

fn report(n: usize, outcome: &Outcome) -> bool {
    match outcome {
        Ok(msg) => println!("criterion {n}: PASS ({msg})"),
        Err(msg) => println!("criterion {n}: FAIL ({msg})"),
    }
    outcome.is_ok()
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let mut ok = true;
    ok &= report(1, &criterion_1());
    ok &= report(2, &criterion_2());
    ok &= report(3, &criterion_3());
    ok &= report(4, &criterion_4());
    ok &= report(5, &criterion_5());

    let runs = (|| -> Result<_, String> {
        Ok((
            cli("ablate", &dir.path().join("ablate1"))?,
            cli("ablate", &dir.path().join("ablate2"))?,
            cli("bench", &dir.path().join("bench1"))?,
            cli("bench", &dir.path().join("bench2"))?,
        ))
    })();
    match runs {
        Ok((a1, a2, b1, b2)) => {
            ok &= report(6, &criterion_6(&a1));
            ok &= report(7, &criterion_7(&b1));
            ok &= report(8, &criterion_8(&a1, &a2, &b1, &b2));
            ok &= report(9, &criterion_9(&b1));
        }
        Err(e) => {
            for n in 6..=9 {
                report(n, &Err(e.clone()));
            }
            ok = false;
        }
    }
    if !ok {
        std::process::exit(1);
    }
}
