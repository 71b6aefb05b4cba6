//! Face cropping and augmentation.
//!
//! Coordinates are continuous image coordinates: pixel `(i, j)` covers
//! `[i, i + 1) x [j, j + 1)` and its center sits at `(i + 0.5, j + 0.5)`.

use rand::Rng;
use sanlite_numerics::resize::cubic_weight;
use serde::{Deserialize, Serialize};

use super::image::RgbImage;
use crate::error::{invalid, Result};

pub type Point = [f64; 2];

/// Axis-aligned box `(x1, y1, x2, y2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn is_valid(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite()) && self.x1 < self.x2 && self.y1 < self.y2
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x1 && p[0] <= self.x2 && p[1] >= self.y1 && p[1] <= self.y2
    }

    /// Grows each side by `ratio` times the box width (horizontally) or height
    /// (vertically).
    pub fn expand(&self, ratio: f64) -> Self {
        let (mx, my) = (ratio * self.width(), ratio * self.height());
        Self::new(self.x1 - mx, self.y1 - my, self.x2 + mx, self.y2 + my)
    }

    pub fn clip(&self, width: f64, height: f64) -> Self {
        Self::new(self.x1.max(0.0), self.y1.max(0.0), self.x2.min(width), self.y2.min(height))
    }
}

/// Per-axis scale and offset: `p' = scale * p + offset`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub scale: [f64; 2],
    pub offset: [f64; 2],
}

impl Affine {
    pub const IDENTITY: Affine = Affine { scale: [1.0, 1.0], offset: [0.0, 0.0] };

    pub fn apply(&self, p: Point) -> Point {
        [self.scale[0] * p[0] + self.offset[0], self.scale[1] * p[1] + self.offset[1]]
    }

    pub fn inverse(&self) -> Affine {
        Affine {
            scale: [1.0 / self.scale[0], 1.0 / self.scale[1]],
            offset: [-self.offset[0] / self.scale[0], -self.offset[1] / self.scale[1]],
        }
    }

    /// Maps `region` onto `[0, w) x [0, h)`.
    pub fn region_to_canvas(region: &BBox, w: usize, h: usize) -> Affine {
        let sx = w as f64 / region.width();
        let sy = h as f64 / region.height();
        Affine { scale: [sx, sy], offset: [-region.x1 * sx, -region.y1 * sy] }
    }
}

/// Bicubic taps on one axis for output pixel centers mapped back into the
/// source by `src = (o + 0.5 - offset) / scale`.
fn axis_taps(out_len: usize, in_len: usize, scale: f64, offset: f64) -> Vec<([usize; 4], [f32; 4])> {
    (0..out_len)
        .map(|o| {
            let src = (o as f64 + 0.5 - offset) / scale - 0.5;
            let base = src.floor();
            let frac = src - base;
            let mut idx = [0; 4];
            let mut wts = [0.0; 4];
            for t in 0..4 {
                idx[t] = (base as isize - 1 + t as isize).clamp(0, in_len as isize - 1) as usize;
                wts[t] = cubic_weight(frac - (t as f64 - 1.0)) as f32;
            }
            (idx, wts)
        })
        .collect()
}

/// Renders `out_w x out_h` pixels of `img` seen through `to_canvas`
/// (source -> output coordinates), bicubic with clamped edges.
pub fn warp_affine(img: &RgbImage, to_canvas: &Affine, out_w: usize, out_h: usize) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    let tx = axis_taps(out_w, w, to_canvas.scale[0], to_canvas.offset[0]);
    let ty = axis_taps(out_h, h, to_canvas.scale[1], to_canvas.offset[1]);
    let mut data = Vec::with_capacity(3 * out_w * out_h);
    let mut rows = vec![0.0f32; h * out_w];
    for c in 0..3 {
        let plane = img.plane(c);
        for y in 0..h {
            let line = &plane[y * w..(y + 1) * w];
            for (x, (idx, wts)) in tx.iter().enumerate() {
                rows[y * out_w + x] = (0..4).map(|t| wts[t] * line[idx[t]]).sum();
            }
        }
        for (idx, wts) in &ty {
            for x in 0..out_w {
                data.push((0..4).map(|t| wts[t] * rows[idx[t] * out_w + x]).sum());
            }
        }
    }
    RgbImage::from_planar(out_w, out_h, data).expect("warp geometry")
}

/// Face crop: `face` grown by `expand_ratio`, clipped to the image, and
/// resampled to `out_size x out_size`. Returns the crop and the map from
/// original-image coordinates to crop coordinates.
pub fn crop_face(img: &RgbImage, face: &BBox, expand_ratio: f64, out_size: usize) -> Result<(RgbImage, Affine)> {
    if !face.is_valid() {
        return Err(invalid(format!("degenerate face box {face:?}")));
    }
    if out_size == 0 {
        return Err(invalid("crop size must be positive"));
    }
    let region = face.expand(expand_ratio).clip(img.width() as f64, img.height() as f64);
    if !region.is_valid() {
        return Err(invalid(format!("face box {face:?} lies outside the image")));
    }
    let to_crop = Affine::region_to_canvas(&region, out_size, out_size);
    Ok((warp_affine(img, &to_crop, out_size, out_size), to_crop))
}

/// Random integer translation of a crop by up to `max_shift` pixels per axis.
/// The range is narrowed so in-bounds landmarks stay in bounds; vacated
/// pixels repeat the nearest edge.
pub fn random_crop_augment<R: Rng + ?Sized>(
    img: &RgbImage,
    landmarks: &[Point],
    max_shift: usize,
    rng: &mut R,
) -> (RgbImage, Vec<Point>, [isize; 2]) {
    let shift = sample_shift(img.width(), img.height(), landmarks, max_shift, rng);
    (translate(img, shift), shift_points(landmarks, shift), shift)
}

pub fn sample_shift<R: Rng + ?Sized>(width: usize, height: usize, landmarks: &[Point], max_shift: usize, rng: &mut R) -> [isize; 2] {
    let m = max_shift as isize;
    let mut shift = [0isize; 2];
    for (axis, len) in [(0, width as f64), (1, height as f64)] {
        let (mut lo, mut hi) = (-m, m);
        for v in landmarks.iter().map(|p| p[axis]).filter(|v| (0.0..len).contains(v)) {
            // keep v + s inside [0, len); zero always satisfies both bounds
            lo = lo.max((-v).ceil() as isize);
            hi = hi.min((len - v).ceil() as isize - 1);
        }
        shift[axis] = if lo == hi { lo } else { rng.random_range(lo as i64..=hi as i64) as isize };
    }
    shift
}

pub fn shift_points(points: &[Point], shift: [isize; 2]) -> Vec<Point> {
    points.iter().map(|p| [p[0] + shift[0] as f64, p[1] + shift[1] as f64]).collect()
}

/// Moves content by `shift` pixels, clamping reads at the border.
pub fn translate(img: &RgbImage, shift: [isize; 2]) -> RgbImage {
    if shift == [0, 0] {
        return img.clone();
    }
    let (w, h) = (img.width() as isize, img.height() as isize);
    let mut data = Vec::with_capacity(img.data().len());
    for c in 0..3 {
        let plane = img.plane(c);
        for y in 0..h {
            let sy = (y - shift[1]).clamp(0, h - 1);
            for x in 0..w {
                let sx = (x - shift[0]).clamp(0, w - 1);
                data.push(plane[(sy * w + sx) as usize]);
            }
        }
    }
    RgbImage::from_planar(img.width(), img.height(), data).expect("translate geometry")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn expansion_margin() {
        let b = BBox::new(10.0, 10.0, 50.0, 50.0).expand(0.2);
        assert_eq!(b, BBox::new(2.0, 2.0, 58.0, 58.0));
    }

    #[test]
    fn degenerate_box_rejected() {
        let img = RgbImage::filled(8, 8, [0.5; 3]);
        assert!(crop_face(&img, &BBox::new(3.0, 3.0, 3.0, 6.0), 0.2, 8).is_err());
        assert!(crop_face(&img, &BBox::new(30.0, 30.0, 40.0, 40.0), 0.0, 8).is_err());
    }

    #[test]
    fn affine_round_trip() {
        let a = Affine { scale: [1.7, 0.4], offset: [-3.2, 9.0] };
        for p in [[0.0, 0.0], [13.5, -2.25], [64.0, 31.0]] {
            let q = a.inverse().apply(a.apply(p));
            assert!((q[0] - p[0]).abs() < 1e-9 && (q[1] - p[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_margin_is_identity() {
        let img = RgbImage::from_fn(6, 6, |x, y| [x as f32 / 6.0, y as f32 / 6.0, 0.1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = vec![[2.5, 3.5]];
        let (out, moved, shift) = random_crop_augment(&img, &pts, 0, &mut rng);
        assert_eq!(shift, [0, 0]);
        assert_eq!(out, img);
        assert_eq!(moved, pts);
    }
}

/// Bicubic resize of a whole image (half-pixel centers).
pub fn resize_image(img: &RgbImage, width: usize, height: usize) -> RgbImage {
    if img.width() == width && img.height() == height {
        return img.clone();
    }
    let full = BBox::new(0.0, 0.0, img.width() as f64, img.height() as f64);
    warp_affine(img, &Affine::region_to_canvas(&full, width, height), width, height)
}
