//! Deterministic report files: long-format CSV, JSON summary, SVG bar chart.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, OutputFormat};
use crate::harness::experiments::{sort_rows, CalibrationEntry, ResultRow};
use crate::transforms::TransformPreset;

pub const REPORT_SCHEMA: &str = "centerquant.report/1";

/// Stamped into every CSV row and JSON report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub version: String,
}

impl Provenance {
    pub fn for_config(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            config_hash: cfg.hash()?,
            version: crate::VERSION.to_string(),
        })
    }
}

/// Run settings echoed into JSON reports. Output location is left out so
/// reports written to different directories stay identical.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub seed: u64,
    pub n_seeds: usize,
    pub bits_act: u8,
    pub bits_weight: u8,
    pub weight_block: usize,
    pub epsilon: f64,
    pub alpha_grid: Vec<f64>,
    pub presets: Vec<TransformPreset>,
}

impl Settings {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            seed: cfg.seed,
            n_seeds: cfg.n_seeds,
            bits_act: cfg.bits_act,
            bits_weight: cfg.bits_weight,
            weight_block: cfg.weight_block,
            epsilon: cfg.epsilon,
            alpha_grid: cfg.alpha.grid(),
            presets: cfg.presets.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub preset: TransformPreset,
    pub site: String,
    pub n: usize,
    pub mean_sqnr_db: f64,
    pub min_sqnr_db: f64,
    pub max_sqnr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JsonReport {
    pub schema: &'static str,
    pub kind: String,
    pub provenance: Provenance,
    pub settings: Settings,
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(TransformPreset, &str), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.preset, r.site.as_str())).or_default().push(r.sqnr_db);
    }
    groups
        .into_iter()
        .map(|((preset, site), v)| SummaryRow {
            preset,
            site: site.to_string(),
            n: v.len(),
            mean_sqnr_db: v.iter().sum::<f64>() / v.len() as f64,
            min_sqnr_db: v.iter().copied().fold(f64::INFINITY, f64::min),
            max_sqnr_db: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect()
}

/// `preset,site,seed,sqnr_db,alpha,config_hash,version`, one line per row.
pub fn rows_csv(rows: &[ResultRow], prov: &Provenance) -> String {
    let mut out = String::from("preset,site,seed,sqnr_db,alpha,config_hash,version\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.preset, r.site, r.seed, r.sqnr_db, r.alpha, prov.config_hash, prov.version
        );
    }
    out
}

pub fn report_json(kind: &str, cfg: &ExperimentConfig, rows: &[ResultRow], prov: &Provenance) -> Result<String> {
    let report = JsonReport {
        schema: REPORT_SCHEMA,
        kind: kind.to_string(),
        provenance: prov.clone(),
        settings: Settings::from_config(cfg),
        rows: rows.to_vec(),
        summary: summarize(rows),
    };
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

const PALETTE: [&str; 6] = ["#7f7f7f", "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"];

fn color(preset: TransformPreset) -> &'static str {
    let i = TransformPreset::ALL.iter().position(|p| *p == preset).unwrap_or(0);
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Grouped bar chart of mean SQNR: one group per site, one bar per preset.
pub fn bar_chart_svg(title: &str, rows: &[ResultRow]) -> String {
    let summary = summarize(rows);
    let mut sites: Vec<&str> = summary.iter().map(|s| s.site.as_str()).collect();
    sites.sort_unstable();
    sites.dedup();
    let mut presets: Vec<TransformPreset> = summary.iter().map(|s| s.preset).collect();
    presets.sort_unstable();
    presets.dedup();

    let hi = summary.iter().map(|s| s.mean_sqnr_db).fold(0.0_f64, f64::max);
    let lo = summary.iter().map(|s| s.mean_sqnr_db).fold(0.0_f64, f64::min);
    let top = (hi / 5.0).ceil() * 5.0;
    let bottom = (lo / 5.0).floor() * 5.0;
    let span = (top - bottom).max(5.0);

    let (bar_w, gap, left, plot_h, plot_top) = (14.0, 18.0, 60.0, 300.0, 40.0);
    let group_w = bar_w * presets.len() as f64 + gap;
    let width = (left + group_w * sites.len() as f64 + 150.0).max(420.0);
    let height = plot_top + plot_h + 50.0;
    let y = |v: f64| plot_top + (top - v) / span * plot_h;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{left}" y="20" font-size="13">{}</text>"#, escape(title));
    let mut tick = bottom;
    while tick <= top + 1e-9 {
        let ty = y(tick);
        let _ = writeln!(
            s,
            "<line x1=\"{left}\" y1=\"{ty:.2}\" x2=\"{:.2}\" y2=\"{ty:.2}\" stroke=\"#dddddd\"/>",
            width - 150.0
        );
        let _ = writeln!(s, r#"<text x="{:.0}" y="{:.2}" text-anchor="end">{tick:.0}</text>"#, left - 6.0, ty + 4.0);
        tick += 5.0;
    }
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.0}" transform="rotate(-90 14 {:.0})" text-anchor="middle">SQNR [dB]</text>"#,
        plot_top + plot_h / 2.0,
        plot_top + plot_h / 2.0
    );
    let zero = y(0.0);
    for (g, site) in sites.iter().enumerate() {
        let x0 = left + gap / 2.0 + g as f64 * group_w;
        for (b, preset) in presets.iter().enumerate() {
            let Some(row) = summary.iter().find(|r| r.site == *site && r.preset == *preset) else {
                continue;
            };
            let v = y(row.mean_sqnr_db);
            let (ry, rh) = if v < zero { (v, zero - v) } else { (zero, v - zero) };
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{ry:.2}" width="{bar_w}" height="{rh:.2}" fill="{}"><title>{preset} {}: {:.2} dB</title></rect>"#,
                x0 + b as f64 * bar_w,
                color(*preset),
                escape(site),
                row.mean_sqnr_db
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.0}" text-anchor="middle">{}</text>"#,
            x0 + bar_w * presets.len() as f64 / 2.0,
            plot_top + plot_h + 18.0,
            escape(site)
        );
    }
    let _ = writeln!(
        s,
        "<line x1=\"{left}\" y1=\"{zero:.2}\" x2=\"{:.2}\" y2=\"{zero:.2}\" stroke=\"#333333\"/>",
        width - 150.0
    );
    for (i, preset) in presets.iter().enumerate() {
        let ly = plot_top + 10.0 + i as f64 * 18.0;
        let lx = width - 130.0;
        let _ = writeln!(s, r#"<rect x="{lx}" y="{:.0}" width="12" height="12" fill="{}"/>"#, ly - 10.0, color(*preset));
        let _ = writeln!(s, r#"<text x="{}" y="{ly:.0}">{preset}</text>"#, lx + 18.0);
    }
    s.push_str("</svg>\n");
    s
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `<stem>.csv`, `<stem>.json` and/or `<stem>.svg` into
/// `cfg.output_dir`, in that order, so earlier files survive a later
/// failure. Rows are sorted before writing.
pub fn write_reports(kind: &str, cfg: &ExperimentConfig, rows: &[ResultRow]) -> Result<Vec<PathBuf>> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let prov = Provenance::for_config(cfg)?;
    let mut rows = rows.to_vec();
    sort_rows(&mut rows);
    let mut formats = cfg.formats.clone();
    formats.sort_unstable();
    formats.dedup();
    let mut written = Vec::new();
    for format in formats {
        let path = dir.join(format!("{kind}.{format}"));
        let text = match format {
            OutputFormat::Csv => rows_csv(&rows, &prov),
            OutputFormat::Json => report_json(kind, cfg, &rows, &prov)?,
            OutputFormat::Svg => bar_chart_svg(&format!("{kind}: SQNR per site and transform"), &rows),
        };
        write_file(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes the alpha sweep: `calibrate.csv` holds every grid point, the JSON
/// and SVG reports hold the selected alpha per (preset, site, seed).
pub fn write_calibration_reports(
    cfg: &ExperimentConfig,
    tables: &[CalibrationEntry],
) -> Result<Vec<PathBuf>> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let prov = Provenance::for_config(cfg)?;
    let mut tables = tables.to_vec();
    tables.sort_by(|a, b| (a.0.preset, &a.0.site, a.0.seed).cmp(&(b.0.preset, &b.0.site, b.0.seed)));
    let rows: Vec<ResultRow> = tables.iter().map(|t| t.0.clone()).collect();
    let mut formats = cfg.formats.clone();
    formats.sort_unstable();
    formats.dedup();
    let mut written = Vec::new();
    for format in formats {
        let path = dir.join(format!("calibrate.{format}"));
        let text = match format {
            OutputFormat::Csv => calibration_csv(&tables, &prov),
            OutputFormat::Json => report_json("calibrate", cfg, &rows, &prov)?,
            OutputFormat::Svg => bar_chart_svg("calibrate: SQNR at the selected alpha", &rows),
        };
        write_file(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}

/// Alpha sweep tables: `preset,site,seed,alpha,sqnr_db,selected,config_hash,version`.
pub fn calibration_csv(tables: &[CalibrationEntry], prov: &Provenance) -> String {
    let mut out = String::from("preset,site,seed,alpha,sqnr_db,selected,config_hash,version\n");
    for (row, table) in tables {
        for &(alpha, db) in table {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                row.preset,
                row.site,
                row.seed,
                alpha,
                db,
                alpha == row.alpha,
                prov.config_hash,
                prov.version
            );
        }
    }
    out
}
