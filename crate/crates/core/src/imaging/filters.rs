//! Deterministic recoloring filters standing in for the three synthetic
//! styles. None of them moves content.

use serde::{Deserialize, Serialize};

use super::image::RgbImage;

pub const LIGHT_GAMMA: f32 = 0.55;
pub const SKETCH_SIGMA_FRACTION: f32 = 0.04;
pub const SKETCH_EPSILON: f32 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StyleFilter {
    Light,
    Gray,
    Sketch,
}

impl StyleFilter {
    pub const ALL: [StyleFilter; 3] = [StyleFilter::Light, StyleFilter::Gray, StyleFilter::Sketch];

    pub fn apply(self, img: &RgbImage) -> RgbImage {
        match self {
            StyleFilter::Light => light_style(img),
            StyleFilter::Gray => gray_style(img),
            StyleFilter::Sketch => sketch_style(img),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StyleFilter::Light => "light",
            StyleFilter::Gray => "gray",
            StyleFilter::Sketch => "sketch",
        }
    }
}

/// Rec. 601 luma. Pixels that are already gray map to themselves exactly.
pub fn luma(r: f32, g: f32, b: f32) -> f32 {
    if r == g && g == b {
        return r;
    }
    (0.299 * r + 0.587 * g + 0.114 * b).clamp(0.0, 1.0)
}

fn luma_plane(img: &RgbImage) -> Vec<f32> {
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    r.iter().zip(g).zip(b).map(|((&r, &g), &b)| luma(r, g, b)).collect()
}

fn replicate(width: usize, height: usize, plane: &[f32]) -> RgbImage {
    let mut data = Vec::with_capacity(3 * plane.len());
    for _ in 0..3 {
        data.extend_from_slice(plane);
    }
    RgbImage::from_planar(width, height, data).expect("same geometry")
}

pub fn gray_style(img: &RgbImage) -> RgbImage {
    replicate(img.width(), img.height(), &luma_plane(img))
}

pub fn light_style(img: &RgbImage) -> RgbImage {
    img.map(|v| v.powf(LIGHT_GAMMA))
}

/// Color dodge of the luma over its blurred negative.
pub fn sketch_style(img: &RgbImage) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    let g = luma_plane(img);
    let inverted: Vec<f32> = g.iter().map(|v| 1.0 - v).collect();
    let sigma = SKETCH_SIGMA_FRACTION * w.min(h) as f32;
    let blurred = blur_plane(&inverted, w, h, sigma);
    let out: Vec<f32> = g
        .iter()
        .zip(&blurred)
        .map(|(&g, &b)| (g / (1.0 - b + SKETCH_EPSILON)).clamp(0.0, 1.0))
        .collect();
    replicate(w, h, &out)
}

/// Normalized Gaussian taps for offsets `-r..=r`, `r = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(0.0) as isize;
    let two_s2 = 2.0 * (sigma as f64) * (sigma as f64);
    let raw: Vec<f64> = (-radius..=radius).map(|i| (-((i * i) as f64) / two_s2).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| (v / total) as f32).collect()
}

/// Separable Gaussian blur of one plane with clamped edges.
pub fn blur_plane(plane: &[f32], width: usize, height: usize, sigma: f32) -> Vec<f32> {
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0f32; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0f32;
            for (k, &wt) in kernel.iter().enumerate() {
                acc += wt * row[clamp(x as isize + k as isize - r, width)];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0f32; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0f32;
            for (k, &wt) in kernel.iter().enumerate() {
                acc += wt * tmp[clamp(y as isize + k as isize - r, height) * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Blurs every channel. `sigma` must be positive.
pub fn gaussian_blur(img: &RgbImage, sigma: f32) -> RgbImage {
    assert!(sigma > 0.0, "gaussian_blur needs sigma > 0");
    let (w, h) = (img.width(), img.height());
    let mut data = Vec::with_capacity(img.data().len());
    for c in 0..3 {
        data.extend(blur_plane(img.plane(c), w, h, sigma));
    }
    RgbImage::from_planar(w, h, data).expect("same geometry")
}
