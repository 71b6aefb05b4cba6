//! NME, CED and AUC metrics, the cross-style grid and report files.

mod cross;
mod metrics;
mod report;

pub use cross::{cell_seed, cross_style_matrix, improvement_grid, CrossStyleResult, DetectorFactory, StyleMatrix};
pub use metrics::{auc_at, ced_curve, distance, error_grid, evaluate_predictions, nme, CedCurve, EvalResult, Normalizer};
pub use report::{
    ced_svg, default_grid, emit_report, improvement_csv, matrix_csv, per_image_csv, summary_csv, EvalReport, AUC_THRESHOLD,
};
