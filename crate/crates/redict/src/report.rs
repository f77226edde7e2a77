//! Report emission: canonical records CSV, per-cell grid CSV, and SVG
//! renderings (success-rate heatmap plus error-vs-epsilon lines).
//!
//! Every output file embeds the tool version, the resolved config digest,
//! the base seed and the PRNG name as leading `#` comment lines (CSV) or
//! a `<desc>` element (SVG). Re-running with identical inputs reproduces
//! CSVs byte for byte; wall-clock timings are therefore kept off the
//! canonical records schema.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::{PhaseCell, TrialRecord};
use crate::sampling::PRNG_NAME;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportMeta {
    pub version: String,
    pub config_digest: String,
    pub base_seed: u64,
    pub prng: String,
}

impl ReportMeta {
    pub fn new(config_digest: impl Into<String>, base_seed: u64) -> Self {
        ReportMeta {
            version: crate::harness::TOOL_VERSION.to_string(),
            config_digest: config_digest.into(),
            base_seed,
            prng: PRNG_NAME.to_string(),
        }
    }

    fn write_comments(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "# redict-version: {}", self.version)?;
        writeln!(w, "# config-digest: {}", self.config_digest)?;
        writeln!(w, "# base-seed: {}", self.base_seed)?;
        writeln!(w, "# prng: {}", self.prng)?;
        Ok(())
    }
}

pub const RECORDS_HEADER: &str =
    "seed,m,s,epsilon,error_l2,objective,feasibility_gap,iterations,converged,eta_estimate,delta_estimate,success,error";

pub const GRID_HEADER: &str = "m,s,epsilon,trials,successes,success_rate,median_error_l2";

/// Solver-flavor record CSV used by `recover`.
pub const SOLVER_RECORDS_HEADER: &str =
    "seed,m,s,epsilon,error_l2,objective,feasibility_gap,iterations,converged";

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_records_csv(
    records: &[TrialRecord],
    meta: &ReportMeta,
    w: &mut impl Write,
) -> std::io::Result<()> {
    meta.write_comments(w)?;
    writeln!(w, "{RECORDS_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.seed,
            r.m,
            r.s,
            r.epsilon,
            r.error_l2,
            r.objective,
            r.feasibility_gap,
            r.iterations,
            r.converged,
            r.eta_estimate,
            fmt_opt_f64(r.delta_estimate),
            r.success,
            r.error.as_deref().unwrap_or("")
        )?;
    }
    Ok(())
}

pub fn write_solver_records_csv(
    records: &[TrialRecord],
    meta: &ReportMeta,
    w: &mut impl Write,
) -> std::io::Result<()> {
    meta.write_comments(w)?;
    writeln!(w, "{SOLVER_RECORDS_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.seed,
            r.m,
            r.s,
            r.epsilon,
            r.error_l2,
            r.objective,
            r.feasibility_gap,
            r.iterations,
            r.converged,
        )?;
    }
    Ok(())
}

pub fn write_grid_csv(
    cells: &[PhaseCell],
    meta: &ReportMeta,
    w: &mut impl Write,
) -> std::io::Result<()> {
    meta.write_comments(w)?;
    writeln!(w, "{GRID_HEADER}")?;
    for c in cells {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            c.m, c.s, c.epsilon, c.trials, c.successes, c.success_rate, c.median_error_l2
        )?;
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(tok: &str, name: &str) -> Result<T> {
    tok.parse::<T>()
        .map_err(|_| Error::invalid(format!("bad value `{tok}` for column {name}")))
}

/// Parse the canonical records CSV back. Parsed records carry
/// `wall_time_ms = None`; every emitted field round-trips exactly.
pub fn parse_records_csv(reader: impl Read) -> Result<(Vec<TrialRecord>, Option<ReportMeta>)> {
    let mut version = None;
    let mut digest = None;
    let mut base_seed = None;
    let mut prng = None;
    let mut records = Vec::new();
    let mut saw_header = false;
    for line in BufReader::new(reader).lines() {
        let line = line.map_err(|e| Error::io("<records>", e))?;
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some((k, v)) = rest.split_once(':') {
                match k.trim() {
                    "redict-version" => version = Some(v.trim().to_string()),
                    "config-digest" => digest = Some(v.trim().to_string()),
                    "base-seed" => base_seed = v.trim().parse::<u64>().ok(),
                    "prng" => prng = Some(v.trim().to_string()),
                    _ => {}
                }
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        if !saw_header {
            if line != RECORDS_HEADER {
                return Err(Error::invalid(format!(
                    "unexpected records header: `{line}`"
                )));
            }
            saw_header = true;
            continue;
        }
        let toks: Vec<&str> = line.split(',').collect();
        if toks.len() != 13 {
            return Err(Error::invalid(format!(
                "record row has {} columns, expected 13",
                toks.len()
            )));
        }
        records.push(TrialRecord {
            seed: parse_field(toks[0], "seed")?,
            m: parse_field(toks[1], "m")?,
            s: parse_field(toks[2], "s")?,
            epsilon: parse_field(toks[3], "epsilon")?,
            error_l2: parse_field(toks[4], "error_l2")?,
            objective: parse_field(toks[5], "objective")?,
            feasibility_gap: parse_field(toks[6], "feasibility_gap")?,
            iterations: parse_field(toks[7], "iterations")?,
            converged: parse_field(toks[8], "converged")?,
            eta_estimate: parse_field(toks[9], "eta_estimate")?,
            delta_estimate: if toks[10].is_empty() {
                None
            } else {
                Some(parse_field(toks[10], "delta_estimate")?)
            },
            success: parse_field(toks[11], "success")?,
            error: if toks[12].is_empty() {
                None
            } else {
                Some(toks[12].to_string())
            },
            wall_time_ms: None,
        });
    }
    if !saw_header {
        return Err(Error::invalid("records CSV has no header"));
    }
    let meta = match (version, digest, base_seed, prng) {
        (Some(version), Some(config_digest), Some(base_seed), Some(prng)) => Some(ReportMeta {
            version,
            config_digest,
            base_seed,
            prng,
        }),
        _ => None,
    };
    Ok((records, meta))
}

// ---------------------------------------------------------------------------
// SVG
// ---------------------------------------------------------------------------

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn heat_color(rate: f64) -> String {
    // dark blue (0) to warm yellow (1)
    let t = rate.clamp(0.0, 1.0);
    let r = (20.0 + 235.0 * t) as u8;
    let g = (30.0 + 200.0 * t) as u8;
    let b = (90.0 + 40.0 * (1.0 - t)) as u8;
    format!("rgb({r},{g},{b})")
}

/// Success-rate heatmap over the (m, s) grid plus median-error-vs-epsilon
/// lines. One cell rectangle per (m, s) pair; multiple epsilons are
/// averaged in the heatmap and separated in the line plot.
pub fn write_svg_report(
    cells: &[PhaseCell],
    meta: &ReportMeta,
    w: &mut impl Write,
) -> std::io::Result<()> {
    let mut ms: Vec<usize> = cells.iter().map(|c| c.m).collect();
    ms.sort_unstable();
    ms.dedup();
    let mut ss: Vec<usize> = cells.iter().map(|c| c.s).collect();
    ss.sort_unstable();
    ss.dedup();
    let mut eps: Vec<f64> = cells.iter().map(|c| c.epsilon).collect();
    eps.sort_by(f64::total_cmp);
    eps.dedup_by(|a, b| a == b);

    let cell_px = 40.0;
    let margin = 70.0;
    let heat_w = ms.len() as f64 * cell_px;
    let heat_h = ss.len() as f64 * cell_px;
    let line_w = 260.0;
    let width = margin * 2.0 + heat_w + line_w + 80.0;
    let height = margin * 2.0 + heat_h.max(200.0);

    writeln!(
        w,
        r#"<?xml version="1.0" encoding="UTF-8"?>"#
    )?;
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    )?;
    writeln!(
        w,
        "<desc>redict-version={}; config-digest={}; base-seed={}; prng={}</desc>",
        esc(&meta.version),
        esc(&meta.config_digest),
        meta.base_seed,
        esc(&meta.prng)
    )?;
    writeln!(
        w,
        r#"<text x="{margin}" y="30" font-family="sans-serif" font-size="14">success rate over (m, s)</text>"#
    )?;
    // heatmap cells
    for (si, &s) in ss.iter().enumerate() {
        for (mi, &m) in ms.iter().enumerate() {
            let group: Vec<&PhaseCell> = cells.iter().filter(|c| c.m == m && c.s == s).collect();
            if group.is_empty() {
                continue;
            }
            let rate =
                group.iter().map(|c| c.success_rate).sum::<f64>() / group.len() as f64;
            let x = margin + mi as f64 * cell_px;
            let y = margin + si as f64 * cell_px;
            writeln!(
                w,
                r#"<rect x="{x}" y="{y}" width="{cell_px}" height="{cell_px}" fill="{}" stroke="white"><title>m={m} s={s} rate={rate:.3}</title></rect>"#,
                heat_color(rate)
            )?;
        }
    }
    // axis labels
    for (mi, &m) in ms.iter().enumerate() {
        let x = margin + mi as f64 * cell_px + cell_px / 2.0;
        let y = margin + heat_h + 16.0;
        writeln!(
            w,
            r#"<text x="{x}" y="{y}" font-family="sans-serif" font-size="10" text-anchor="middle">{m}</text>"#
        )?;
    }
    for (si, &s) in ss.iter().enumerate() {
        let x = margin - 8.0;
        let y = margin + si as f64 * cell_px + cell_px / 2.0 + 4.0;
        writeln!(
            w,
            r#"<text x="{x}" y="{y}" font-family="sans-serif" font-size="10" text-anchor="end">{s}</text>"#
        )?;
    }
    writeln!(
        w,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">m</text>"#,
        margin + heat_w / 2.0,
        margin + heat_h + 34.0
    )?;
    writeln!(
        w,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle" transform="rotate(-90 {} {})">s</text>"#,
        margin - 40.0,
        margin + heat_h / 2.0,
        margin - 40.0,
        margin + heat_h / 2.0
    )?;

    // error vs epsilon line plot (log-log when meaningful)
    let plot_x0 = margin + heat_w + 80.0;
    let plot_y0 = margin;
    let plot_h = heat_h.max(160.0);
    writeln!(
        w,
        r#"<text x="{plot_x0}" y="30" font-family="sans-serif" font-size="14">median error vs epsilon</text>"#
    )?;
    writeln!(
        w,
        r#"<rect x="{plot_x0}" y="{plot_y0}" width="{line_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    )?;
    let positive_eps: Vec<f64> = eps.iter().copied().filter(|&e| e > 0.0).collect();
    if positive_eps.len() >= 2 {
        let mut pts: Vec<(f64, f64)> = Vec::new();
        for &e in &positive_eps {
            let group: Vec<&PhaseCell> =
                cells.iter().filter(|c| c.epsilon == e).collect();
            if group.is_empty() {
                continue;
            }
            let med = group.iter().map(|c| c.median_error_l2).sum::<f64>() / group.len() as f64;
            pts.push((e, med.max(1e-16)));
        }
        let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
        let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
        let (xmin, xmax) = (
            lx.iter().copied().fold(f64::INFINITY, f64::min),
            lx.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        );
        let (ymin, ymax) = (
            ly.iter().copied().fold(f64::INFINITY, f64::min),
            ly.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        );
        let sx = |v: f64| plot_x0 + (v - xmin) / (xmax - xmin).max(1e-12) * line_w;
        let sy = |v: f64| plot_y0 + plot_h - (v - ymin) / (ymax - ymin).max(1e-12) * plot_h;
        let path: Vec<String> = lx
            .iter()
            .zip(&ly)
            .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        writeln!(
            w,
            r#"<polyline points="{}" fill="none" stroke="crimson" stroke-width="2"/>"#,
            path.join(" ")
        )?;
        for (&x, &y) in lx.iter().zip(&ly) {
            writeln!(
                w,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="crimson"/>"#,
                sx(x),
                sy(y)
            )?;
        }
    } else {
        writeln!(
            w,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">(needs two positive epsilon values)</text>"#,
            plot_x0 + line_w / 2.0,
            plot_y0 + plot_h / 2.0
        )?;
    }
    writeln!(
        w,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">epsilon</text>"#,
        plot_x0 + line_w / 2.0,
        plot_y0 + plot_h + 34.0
    )?;
    writeln!(w, "</svg>")?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Svg,
}

/// Write a full report for the given records. CSV produces the canonical
/// records file plus the per-cell grid (`<stem>.grid.csv`); SVG renders the
/// summary plot. Returns the written paths.
pub fn emit_report(
    records: &[TrialRecord],
    meta: &ReportMeta,
    format: ReportFormat,
    path: &Path,
) -> Result<Vec<std::path::PathBuf>> {
    if records.is_empty() {
        return Err(Error::invalid("no records to report"));
    }
    let cells = crate::harness::summarize_cells(records);
    let open = |p: &Path| -> Result<std::fs::File> {
        std::fs::File::create(p).map_err(|e| Error::io(p.display().to_string(), e))
    };
    match format {
        ReportFormat::Csv => {
            let mut out = open(path)?;
            write_records_csv(records, meta, &mut out)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            let grid_path = path.with_extension("grid.csv");
            let mut gout = open(&grid_path)?;
            write_grid_csv(&cells, meta, &mut gout)
                .map_err(|e| Error::io(grid_path.display().to_string(), e))?;
            Ok(vec![path.to_path_buf(), grid_path])
        }
        ReportFormat::Svg => {
            let mut out = open(path)?;
            write_svg_report(&cells, meta, &mut out)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            Ok(vec![path.to_path_buf()])
        }
    }
}
