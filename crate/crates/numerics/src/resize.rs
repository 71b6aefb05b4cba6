//! Catmull-Rom bicubic resampling (a = -0.5), half-pixel centers, clamped edges.

use crate::error::{shape_err, Result};
use crate::float::Float;
use crate::tensor::Tensor;

const A: f64 = -0.5;

/// Cubic convolution kernel weight at distance `x`.
pub fn cubic_weight(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// For each output index, the four clamped source indices and their weights.
fn taps(in_len: usize, out_len: usize) -> Vec<([usize; 4], [f64; 4])> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = (o as f64 + 0.5) * scale - 0.5;
            let base = src.floor();
            let frac = src - base;
            let mut idx = [0usize; 4];
            let mut wts = [0f64; 4];
            for t in 0..4 {
                let pos = base as isize - 1 + t as isize;
                idx[t] = pos.clamp(0, in_len as isize - 1) as usize;
                wts[t] = cubic_weight(frac - (t as f64 - 1.0));
            }
            (idx, wts)
        })
        .collect()
}

/// Resizes one `h x w` plane to `oh x ow`.
pub fn resize_plane<T: Float>(plane: &[T], h: usize, w: usize, oh: usize, ow: usize) -> Vec<T> {
    if h == oh && w == ow {
        return plane.to_vec();
    }
    let tx = taps(w, ow);
    let ty = taps(h, oh);
    let mut rows = vec![0f64; h * ow];
    for y in 0..h {
        let line = &plane[y * w..(y + 1) * w];
        for (x, (idx, wts)) in tx.iter().enumerate() {
            rows[y * ow + x] = (0..4).map(|t| wts[t] * line[idx[t]].to_f64_lossy()).sum();
        }
    }
    let mut out = Vec::with_capacity(oh * ow);
    for (idx, wts) in &ty {
        for x in 0..ow {
            let v: f64 = (0..4).map(|t| wts[t] * rows[idx[t] * ow + x]).sum();
            out.push(T::from_f64_lossy(v));
        }
    }
    out
}

/// Bicubic resize of every plane of an `[N, C, H, W]` tensor. Inference only.
pub fn bicubic_resize<T: Float>(input: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    if out_h == 0 || out_w == 0 {
        return Err(shape_err("bicubic_resize", format!("output size {out_h}x{out_w} must be positive")));
    }
    let (n, c, h, w) = input.dims4("bicubic_resize")?;
    let mut data = Vec::with_capacity(n * c * out_h * out_w);
    for plane in input.data().chunks(h * w) {
        data.extend(resize_plane(plane, h, w, out_h, out_w));
    }
    Tensor::new(vec![n, c, out_h, out_w], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_interpolates_samples() {
        assert_eq!(cubic_weight(0.0), 1.0);
        assert!(cubic_weight(1.0).abs() < 1e-15);
        assert!(cubic_weight(2.0).abs() < 1e-15);
        for f in [0.0, 0.1, 0.37, 0.5, 0.93] {
            let s: f64 = (0..4).map(|t| cubic_weight(f - (t as f64 - 1.0))).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_output_rejected() {
        let t = Tensor::<f64>::zeros(vec![1, 1, 4, 4]);
        assert!(bicubic_resize(&t, 0, 3).is_err());
    }
}
