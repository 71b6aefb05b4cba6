use serde::{Deserialize, Serialize};

use crate::dataset::{FaceRecord, LandmarkAnnotation};
use crate::error::{invalid, Result};
use crate::imaging::Point;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Normalizer {
    /// Distance between two outer eye corners, by landmark index.
    Interocular { left: usize, right: usize },
    /// `sqrt(width * height)` of the unexpanded face box.
    FaceSize,
}

impl Normalizer {
    /// Outer eye corners of the five-point synthetic layout.
    pub const SYNTHETIC_INTEROCULAR: Normalizer = Normalizer::Interocular { left: 0, right: 1 };
    /// Outer eye corners of the 68-point layout.
    pub const IBUG68_INTEROCULAR: Normalizer = Normalizer::Interocular { left: 36, right: 45 };

    pub fn name(&self) -> &'static str {
        match self {
            Normalizer::Interocular { .. } => "interocular",
            Normalizer::FaceSize => "face-size",
        }
    }

    pub fn value(&self, record: &FaceRecord) -> Result<f64> {
        match *self {
            Normalizer::Interocular { left, right } => {
                let pts = &record.annotation.points;
                let (Some(a), Some(b)) = (pts.get(left), pts.get(right)) else {
                    return Err(invalid(format!("record `{}` lacks eye-corner landmarks {left}/{right}", record.id)));
                };
                Ok(distance(*a, *b))
            }
            Normalizer::FaceSize => Ok((record.bbox.width() * record.bbox.height()).max(0.0).sqrt()),
        }
    }
}

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Mean Euclidean error over visible landmarks divided by `normalizer`.
pub fn nme(pred: &[Point], gt: &LandmarkAnnotation, normalizer: f64) -> Result<f64> {
    if !(normalizer > 0.0) || !normalizer.is_finite() {
        return Err(invalid(format!("NME normalizer must be positive, got {normalizer}")));
    }
    if pred.len() != gt.points.len() {
        return Err(invalid(format!("{} predicted landmarks for {} annotated", pred.len(), gt.points.len())));
    }
    let errors: Vec<f64> = pred
        .iter()
        .zip(&gt.points)
        .zip(&gt.visible)
        .filter(|(_, v)| **v)
        .map(|((p, g), _)| distance(*p, *g))
        .collect();
    if errors.is_empty() {
        return Err(invalid("NME needs at least one visible landmark"));
    }
    Ok(errors.iter().sum::<f64>() / errors.len() as f64 / normalizer)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CedCurve {
    pub grid: Vec<f64>,
    /// Fraction of errors `<=` each grid value.
    pub fractions: Vec<f64>,
}

/// `0, step, 2 step, ... , max` inclusive.
pub fn error_grid(max: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| max * i as f64 / steps as f64).collect()
}

pub fn ced_curve(errors: &[f64], grid: &[f64]) -> Result<CedCurve> {
    if errors.is_empty() {
        return Err(invalid("CED curve needs at least one error"));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("CED grid must be ascending"));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let fractions = grid.iter().map(|&e| sorted.partition_point(|&x| x <= e) as f64 / n).collect();
    Ok(CedCurve { grid: grid.to_vec(), fractions })
}

/// Trapezoidal area under the CED over `[0, threshold]`, divided by `threshold`.
pub fn auc_at(ced: &CedCurve, threshold: f64) -> Result<f64> {
    let g = &ced.grid;
    if !(threshold > 0.0) || g.first().is_none_or(|&x| x > 0.0) || g.last().is_none_or(|&x| x < threshold) {
        return Err(invalid(format!("CED grid must cover [0, {threshold}]")));
    }
    let mut area = 0.0;
    for i in 1..g.len() {
        let (x0, x1) = (g[i - 1].max(0.0), g[i]);
        if x1 <= 0.0 || x0 >= threshold {
            continue;
        }
        let (y0, y1) = (ced.fractions[i - 1], ced.fractions[i]);
        let end = x1.min(threshold);
        let y_end = if x1 > x0 { y0 + (y1 - y0) * (end - x0) / (x1 - x0) } else { y1 };
        area += 0.5 * (y0 + y_end) * (end - x0);
    }
    Ok((area / threshold).clamp(0.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub dataset: String,
    pub detector: String,
    pub normalizer: Normalizer,
    pub record_ids: Vec<String>,
    pub nme: Vec<f64>,
}

impl EvalResult {
    pub fn mean_nme(&self) -> f64 {
        self.nme.iter().sum::<f64>() / self.nme.len().max(1) as f64
    }
}

/// Per-image NME of `predictions` against `records`, in order.
pub fn evaluate_predictions(
    records: &[FaceRecord],
    predictions: &[Vec<Point>],
    normalizer: Normalizer,
    dataset: &str,
    detector: &str,
) -> Result<EvalResult> {
    if records.len() != predictions.len() {
        return Err(invalid("one prediction per record is required"));
    }
    let nme = records
        .iter()
        .zip(predictions)
        .map(|(r, p)| nme(p, &r.annotation, normalizer.value(r)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalResult {
        dataset: dataset.into(),
        detector: detector.into(),
        normalizer,
        record_ids: records.iter().map(|r| r.id.clone()).collect(),
        nme,
    })
}
