use sanlite_numerics::{bicubic_resize, Float, Tensor};

use crate::error::{invalid, Result};
use crate::imaging::Point;

/// Belief maps live at 1/8 of the crop resolution.
pub const HEATMAP_STRIDE: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct BeliefTargets<T> {
    /// `[K + 1, s/8, s/8]`; the last channel is background.
    pub maps: Tensor<T>,
    /// One message per landmark that had to be clamped into the crop.
    pub warnings: Vec<String>,
}

/// Ideal belief maps for landmarks given in crop pixels.
///
/// Cell `(r, c)` sits at heatmap position `(c + 0.5, r + 0.5)`, so a landmark
/// at crop coordinate `x` peaks at the cell containing `x / 8`. Invisible
/// landmarks get an all-zero channel; the background channel is
/// `1 - max_k G_k`.
pub fn make_gt_beliefmaps<T: Float>(points: &[Point], visible: &[bool], input_size: usize, sigma: f64) -> Result<BeliefTargets<T>> {
    if input_size == 0 || input_size % HEATMAP_STRIDE != 0 {
        return Err(invalid(format!("input size {input_size} is not a positive multiple of {HEATMAP_STRIDE}")));
    }
    if points.len() != visible.len() {
        return Err(invalid("landmark and visibility counts differ"));
    }
    if !(sigma > 0.0) {
        return Err(invalid("belief map sigma must be positive"));
    }
    let k = points.len();
    let h = input_size / HEATMAP_STRIDE;
    let limit = input_size as f64;
    let mut warnings = Vec::new();
    let mut data = vec![T::zero(); (k + 1) * h * h];
    let mut bg_max = vec![0.0f64; h * h];
    let inv = 1.0 / (2.0 * sigma * sigma);
    for (i, (p, &vis)) in points.iter().zip(visible).enumerate() {
        if !vis {
            continue;
        }
        let mut q = *p;
        for v in &mut q {
            if !(0.0..limit).contains(v) {
                *v = v.clamp(0.0, limit - 1e-6);
            }
        }
        if q != *p {
            warnings.push(format!("landmark {i} at ({:.2}, {:.2}) clamped into the {input_size}px crop", p[0], p[1]));
        }
        let (cx, cy) = (q[0] / HEATMAP_STRIDE as f64, q[1] / HEATMAP_STRIDE as f64);
        let plane = &mut data[i * h * h..(i + 1) * h * h];
        for r in 0..h {
            for c in 0..h {
                let (dx, dy) = (c as f64 + 0.5 - cx, r as f64 + 0.5 - cy);
                let g = (-(dx * dx + dy * dy) * inv).exp();
                plane[r * h + c] = T::from_f64_lossy(g);
                bg_max[r * h + c] = bg_max[r * h + c].max(g);
            }
        }
    }
    for (slot, m) in data[k * h * h..].iter_mut().zip(&bg_max) {
        *slot = T::from_f64_lossy(1.0 - m);
    }
    Ok(BeliefTargets { maps: Tensor::new(vec![k + 1, h, h], data)?, warnings })
}

/// Argmax of each bicubic-upsampled landmark channel, as the center of the
/// winning pixel. The search covers only pixels whose sample positions lie
/// between the first and last cell centers: outside that band the clamped
/// kernel extrapolates and overshoots toward the border. The background
/// channel is ignored; ties go to the first pixel in row-major order.
pub fn decode_landmarks<T: Float>(maps: &Tensor<T>, input_size: usize) -> Result<Vec<Point>> {
    let shape = maps.shape();
    let (c, h, w) = match *shape {
        [c, h, w] => (c, h, w),
        [1, c, h, w] => (c, h, w),
        _ => return Err(invalid(format!("belief stack must be [K + 1, h, w], got {shape:?}"))),
    };
    if c < 2 {
        return Err(invalid("belief stack needs a landmark channel and a background channel"));
    }
    let f64_maps: Tensor<f64> = maps.cast::<f64>().reshape(vec![1, c, h, w])?;
    let up = bicubic_resize(&f64_maps, input_size, input_size)?;
    let (rows, cols) = (interpolated_band(h, input_size), interpolated_band(w, input_size));
    let plane_len = input_size * input_size;
    Ok((0..c - 1)
        .map(|k| {
            let plane = &up.data()[k * plane_len..(k + 1) * plane_len];
            let mut best = (rows.start, cols.start);
            for y in rows.clone() {
                for x in cols.clone() {
                    if plane[y * input_size + x] > plane[best.0 * input_size + best.1] {
                        best = (y, x);
                    }
                }
            }
            [best.1 as f64 + 0.5, best.0 as f64 + 0.5]
        })
        .collect())
}

/// Output pixels along one axis whose source coordinate falls in `[0, n - 1]`.
fn interpolated_band(n: usize, out: usize) -> std::ops::Range<usize> {
    let scale = out as f64 / n as f64;
    let lo = (0.5 * scale - 0.5).ceil().max(0.0) as usize;
    let hi = ((n as f64 - 0.5) * scale - 0.5).floor() as usize + 1;
    if n < 2 || lo >= hi.min(out) {
        0..out
    } else {
        lo..hi.min(out)
    }
}
