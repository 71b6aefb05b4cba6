use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::cross::{improvement_grid, StyleMatrix};
use super::metrics::{auc_at, ced_curve, error_grid, CedCurve, EvalResult};
use crate::dataset::write_atomic;
use crate::error::{Error, Result};

pub const AUC_THRESHOLD: f64 = 0.08;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub evaluations: Vec<EvalResult>,
    pub matrices: Vec<StyleMatrix>,
    /// Variant names `(base, improved)` for the relative-improvement grid.
    pub comparison: Option<(String, String)>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "failed".into(), |x| format!("{x:.6}"))
}

fn cell_x100(v: Option<f64>) -> String {
    v.map_or_else(|| "failed".into(), |x| format!("{:.4}", 100.0 * x))
}

/// `dataset,detector,record_id,nme,nme_x100`, one row per image.
pub fn per_image_csv(results: &[EvalResult]) -> String {
    let mut out = String::from("dataset,detector,record_id,nme,nme_x100\n");
    for r in results {
        for (id, e) in r.record_ids.iter().zip(&r.nme) {
            let _ = writeln!(out, "{},{},{id},{e:.6},{:.4}", r.dataset, r.detector, 100.0 * e);
        }
    }
    out
}

pub fn summary_csv(results: &[EvalResult]) -> Result<String> {
    let mut out = String::from("dataset,detector,normalizer,images,mean_nme,mean_nme_x100,auc_at_0.08\n");
    for r in results {
        let auc = auc_at(&ced_curve(&r.nme, &default_grid())?, AUC_THRESHOLD)?;
        let m = r.mean_nme();
        let _ = writeln!(out, "{},{},{},{},{m:.6},{:.4},{auc:.6}", r.dataset, r.detector, r.normalizer.name(), r.nme.len(), 100.0 * m);
    }
    Ok(out)
}

pub fn matrix_csv(matrices: &[StyleMatrix]) -> String {
    let mut out = String::from("variant,train_style,test_style,nme,nme_x100\n");
    for m in matrices {
        for (i, tr) in m.styles.iter().enumerate() {
            for (j, te) in m.styles.iter().enumerate() {
                let _ = writeln!(out, "{},{tr},{te},{},{}", m.variant, cell(m.cells[i][j]), cell_x100(m.cells[i][j]));
            }
        }
    }
    out
}

pub fn improvement_csv(base: &StyleMatrix, improved: &StyleMatrix) -> String {
    let grid = improvement_grid(base, improved);
    let mut out = format!("train_style,test_style,{}_nme,{}_nme,relative_improvement\n", base.variant, improved.variant);
    for (i, tr) in base.styles.iter().enumerate() {
        for (j, te) in base.styles.iter().enumerate() {
            let _ = writeln!(out, "{tr},{te},{},{},{}", cell(base.cells[i][j]), cell(improved.cells[i][j]), cell(grid[i][j]));
        }
    }
    out
}

pub fn default_grid() -> Vec<f64> {
    error_grid(0.1, 200)
}

/// CED plot with one polyline per detector variant (errors pooled over datasets).
pub fn ced_svg(results: &[EvalResult]) -> Result<String> {
    let mut variants: Vec<&str> = Vec::new();
    for r in results {
        if !variants.contains(&r.detector.as_str()) {
            variants.push(&r.detector);
        }
    }
    let grid = default_grid();
    let (w, h, pad) = (480.0, 320.0, 40.0);
    let max_x = *grid.last().expect("grid");
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">NME</text>\n\
         <text x=\"12\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 12 {})\" text-anchor=\"middle\">fraction of images</text>\n",
        h - pad,
        w - pad,
        h - pad,
        h - pad,
        w / 2.0,
        h - 8.0,
        h / 2.0,
        h / 2.0
    );
    for (vi, variant) in variants.iter().enumerate() {
        let errors: Vec<f64> = results.iter().filter(|r| r.detector == *variant).flat_map(|r| r.nme.iter().copied()).collect();
        let CedCurve { grid, fractions } = ced_curve(&errors, &grid)?;
        let points: Vec<String> = grid
            .iter()
            .zip(&fractions)
            .map(|(x, y)| format!("{:.2},{:.2}", pad + x / max_x * (w - 2.0 * pad), h - pad - y * (h - 2.0 * pad)))
            .collect();
        let color = colors[vi % colors.len()];
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"><title>{variant}</title></polyline>",
            points.join(" ")
        );
        let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\">{variant}</text>", w - pad - 110.0, pad + 14.0 * (vi as f64 + 1.0));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Writes the CSV tables and the CED plot into `dir`; returns the paths written.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<(&str, String)> = Vec::new();
    if !report.evaluations.is_empty() {
        files.push(("per_image.csv", per_image_csv(&report.evaluations)));
        files.push(("summary.csv", summary_csv(&report.evaluations)?));
        files.push(("ced.svg", ced_svg(&report.evaluations)?));
    }
    if !report.matrices.is_empty() {
        files.push(("style_matrix.csv", matrix_csv(&report.matrices)));
    }
    if let Some((base, improved)) = &report.comparison {
        let find = |name: &str| {
            report.matrices.iter().find(|m| m.variant == name).ok_or_else(|| Error::Invalid(format!("no matrix for variant `{name}`")))
        };
        files.push(("improvement.csv", improvement_csv(find(base)?, find(improved)?)));
    }
    let json = serde_json::to_string_pretty(report).map_err(|source| Error::Json { path: dir.join("report.json"), source })?;
    files.push(("report.json", json));
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        write_atomic(&path, body.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
