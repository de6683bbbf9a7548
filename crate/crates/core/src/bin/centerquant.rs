use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use centerquant::harness::bench::{default_fwht_sizes, fwht_bench, timings_csv};
use centerquant::harness::config::{parse_alpha_grid, AlphaSpec, ExperimentConfig, OutputFormat, Overrides};
use centerquant::harness::experiments::mean_by_preset_site;
use centerquant::harness::report::{write_calibration_reports, write_reports};
use centerquant::harness::selftest::{run_self_test, SELF_TEST_TOL};
use centerquant::harness::synth::{default_text_spec, four_channel_spec, gen_synthetic, tile_channels};
use centerquant::harness::{run_ablation, run_calibration, run_end2end_toy, save_tensor};
use centerquant::transforms::TransformPreset;
use centerquant::{Error, Result};

#[derive(Parser)]
#[command(name = "centerquant", version, about = "Pre-quantization transform experiments on synthetic data")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Activation bits, 2..=8, or 0 for no quantization.
    #[arg(long, global = true)]
    bits_act: Option<u8>,
    /// Weight bits, 2..=8, or 0 for no quantization.
    #[arg(long, global = true)]
    bits_weight: Option<u8>,
    #[arg(long, global = true)]
    weight_block: Option<usize>,
    /// Run a single preset instead of the configured list.
    #[arg(long, global = true)]
    preset: Option<TransformPreset>,
    #[arg(long, global = true, conflicts_with = "alpha_grid")]
    alpha: Option<f64>,
    /// Comma-separated alpha values searched on calibration data.
    #[arg(long, global = true)]
    alpha_grid: Option<String>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report formats; repeat the flag or separate with commas.
    #[arg(long, global = true, value_delimiter = ',')]
    format: Vec<OutputFormat>,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic tensors.
    Gen(GenArgs),
    /// Sweep alpha per site on calibration data.
    Calibrate,
    /// Quantize one site at a time and report per-site SQNR.
    Ablate,
    /// Quantize every site of the toy block and report block-output SQNR.
    Bench,
    /// Time the row-wise Walsh-Hadamard kernel.
    FwhtBench(FwhtArgs),
    /// Check the fusion identities; exits with 4 on failure.
    SelfTest(SelfTestArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SpecKind {
    FourChannel,
    Image,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum TensorFormat {
    Npy,
    Csv,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "four-channel")]
    spec: SpecKind,
    /// Row count; defaults to the config's `dims.s`.
    #[arg(long)]
    tokens: Option<usize>,
    #[arg(long, value_enum, default_value = "npy")]
    file_format: TensorFormat,
}

#[derive(Args)]
struct SelfTestArgs {
    /// Largest accepted absolute error.
    #[arg(long, default_value_t = SELF_TEST_TOL)]
    tol: f64,
}

#[derive(Args)]
struct FwhtArgs {
    #[arg(long)]
    rows: Option<usize>,
    /// Comma-separated transform sizes (powers of two).
    #[arg(long, value_delimiter = ',')]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let alpha = match (c.alpha, &c.alpha_grid) {
        (Some(a), _) => Some(AlphaSpec::Fixed(a)),
        (None, Some(g)) => Some(AlphaSpec::Grid(parse_alpha_grid(g)?)),
        (None, None) => None,
    };
    cfg.apply(&Overrides {
        seed: c.seed,
        bits_act: c.bits_act,
        bits_weight: c.bits_weight,
        weight_block: c.weight_block,
        preset: c.preset,
        alpha,
        output_dir: c.out.clone(),
        formats: (!c.format.is_empty()).then(|| c.format.clone()),
    });
    cfg.validate()?;
    Ok(cfg)
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn gen(cfg: &ExperimentConfig, a: &GenArgs) -> Result<()> {
    let (name, spec) = match a.spec {
        SpecKind::FourChannel => ("four-channel", four_channel_spec()),
        SpecKind::Image => ("image", tile_channels(&cfg.channel_spec, cfg.dims.d)),
        SpecKind::Text => ("text", tile_channels(&default_text_spec(), cfg.dims.d)),
    };
    let x = gen_synthetic(&spec, a.tokens.unwrap_or(cfg.dims.s), cfg.seed)?;
    let ext = match a.file_format {
        TensorFormat::Npy => "npy",
        TensorFormat::Csv => "csv",
    };
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let path = cfg.output_dir.join(format!("{name}_seed{}.{ext}", cfg.seed));
    save_tensor(&x, &path)?;
    print_written(&[path]);
    Ok(())
}

fn fwht(cfg: &ExperimentConfig, a: &FwhtArgs) -> Result<()> {
    let sizes = match (a.rows, a.dims.is_empty()) {
        (None, true) => default_fwht_sizes(),
        (rows, _) => {
            let dims = if a.dims.is_empty() { vec![4096] } else { a.dims.clone() };
            dims.into_iter().map(|d| (rows.unwrap_or(1024), d)).collect()
        }
    };
    let timings = fwht_bench(&sizes, a.repeats, cfg.seed)?;
    for t in &timings {
        println!(
            "{:>6} x {:<6} {:<8} {:>10.6} s {:>10.1} Melem/s",
            t.rows,
            t.d,
            if t.parallel { "parallel" } else { "serial" },
            t.seconds,
            t.melem_per_s
        );
    }
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let path = cfg.output_dir.join("fwht_bench.csv");
    write(&path, &timings_csv(&timings))?;
    print_written(&[path]);
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn print_means(rows: &[centerquant::harness::ResultRow]) {
    for ((preset, site), db) in mean_by_preset_site(rows) {
        println!("{preset:<12} {site:<6} {db:>8.2} dB");
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    match &cli.command {
        Command::Gen(a) => gen(&cfg, a),
        Command::Calibrate => {
            let tables = run_calibration(&cfg)?;
            print_written(&write_calibration_reports(&cfg, &tables)?);
            Ok(())
        }
        Command::Ablate => {
            let rows = run_ablation(&cfg)?;
            print_means(&rows);
            print_written(&write_reports("ablation", &cfg, &rows)?);
            Ok(())
        }
        Command::Bench => {
            let rows = run_end2end_toy(&cfg)?;
            print_means(&rows);
            print_written(&write_reports("bench", &cfg, &rows)?);
            Ok(())
        }
        Command::FwhtBench(a) => fwht(&cfg, a),
        Command::SelfTest(a) => {
            for c in run_self_test(cfg.seed, a.tol)? {
                println!("{:<28} {:e}", c.name, c.max_abs_err);
            }
            println!("self-test passed");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
