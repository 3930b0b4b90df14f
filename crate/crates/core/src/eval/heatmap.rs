//! Model × creator-category accuracy grids.
//!
//! SVG layout: a label column on the left, one header row, then one row per
//! report. Every data cell is 96×28 px and shows the accuracy with three
//! decimals. Cell fill is a linear RGB ramp from [`RAMP_LOW`] at accuracy 0.5
//! (and below) to [`RAMP_HIGH`] at 1.0; an empty category is drawn in
//! `#cccccc` with the text `n/a`. Output carries no timestamps, so equal
//! input gives byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use super::{round4, EvalError, GroupedReport, GROUP_COLUMNS};

/// Ramp color at accuracy 0.5.
pub const RAMP_LOW: &str = "#d73027";
/// Ramp color at accuracy 1.0.
pub const RAMP_HIGH: &str = "#1a9850";

const CELL_W: usize = 96;
const CELL_H: usize = 28;
const EMPTY_FILL: &str = "#cccccc";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapFormat {
    Csv,
    Svg,
}

fn rgb(hex: &str) -> [f64; 3] {
    let v = u32::from_str_radix(&hex[1..], 16).expect("static color");
    [(v >> 16) & 0xff, (v >> 8) & 0xff, v & 0xff].map(f64::from)
}

/// Fill color for an accuracy value.
pub fn ramp_color(value: f64) -> String {
    let t = ((value - 0.5) / 0.5).clamp(0.0, 1.0);
    let (lo, hi) = (rgb(RAMP_LOW), rgb(RAMP_HIGH));
    let c: Vec<u8> = (0..3).map(|i| (lo[i] + t * (hi[i] - lo[i])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn check(rows: &[GroupedReport]) -> Result<(), EvalError> {
    if rows.is_empty() {
        Err(EvalError::EmptyHeatmap)
    } else {
        Ok(())
    }
}

/// `model,ALL,GPT2,HUMAN,OTHERS,RNN`, one line per report, four decimals;
/// an empty category leaves its cell blank.
pub fn heatmap_csv(rows: &[GroupedReport]) -> Result<String, EvalError> {
    check(rows)?;
    let mut out = format!("model,{}\n", GROUP_COLUMNS.join(","));
    for r in rows {
        let label = r.label();
        let label = if label.contains([',', '"']) { format!("\"{}\"", label.replace('"', "\"\"")) } else { label };
        out.push_str(&label);
        for c in GROUP_COLUMNS {
            out.push(',');
            if let Some(a) = r.accuracy(c) {
                out.push_str(&round4(a));
            }
        }
        out.push('\n');
    }
    Ok(out)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn heatmap_svg(rows: &[GroupedReport]) -> Result<String, EvalError> {
    check(rows)?;
    let labels: Vec<String> = rows.iter().map(GroupedReport::label).collect();
    let label_w = 16 + 7 * labels.iter().map(|l| l.chars().count()).max().unwrap_or(0);
    let width = label_w + CELL_W * GROUP_COLUMNS.len();
    let height = CELL_H * (rows.len() + 1);
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    for (c, name) in GROUP_COLUMNS.iter().enumerate() {
        let x = label_w + c * CELL_W + CELL_W / 2;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" text-anchor="middle" font-weight="bold">{name}</text>"#,
            CELL_H / 2 + 4
        );
    }
    for (r, (report, label)) in rows.iter().zip(&labels).enumerate() {
        let y = CELL_H * (r + 1);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            label_w - 8,
            y + CELL_H / 2 + 4,
            xml_escape(label)
        );
        for (c, name) in GROUP_COLUMNS.iter().enumerate() {
            let x = label_w + c * CELL_W;
            let (fill, text) = match report.accuracy(name) {
                Some(a) => (ramp_color(a), format!("{a:.3}")),
                None => (EMPTY_FILL.to_string(), "n/a".to_string()),
            };
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="{fill}" stroke="#ffffff"/>"##
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{text}</text>"#,
                x + CELL_W / 2,
                y + CELL_H / 2 + 4
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn heatmap_export(rows: &[GroupedReport], out: &Path, format: HeatmapFormat) -> Result<(), EvalError> {
    let content = match format {
        HeatmapFormat::Csv => heatmap_csv(rows)?,
        HeatmapFormat::Svg => heatmap_svg(rows)?,
    };
    std::fs::write(out, content).map_err(|source| EvalError::Io {
        path: out.display().to_string(),
        source,
    })
}
