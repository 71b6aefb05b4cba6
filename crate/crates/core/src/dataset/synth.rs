//! Procedural cartoon faces with exact landmark positions.
//!
//! Landmarks (K = 5): left outer eye corner, right outer eye corner, nose
//! tip, left mouth corner, right mouth corner. "Left" is the image left.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{default_image_path, write_manifest, DatasetManifest, FaceRecord, LandmarkAnnotation, Split, StyleLabel};
use crate::error::{Error, Result};
use crate::imaging::{luma, BBox, Point, RgbImage};
use crate::seed;

pub const SYNTH_LANDMARKS: usize = 5;
pub const LEFT_EYE_OUTER: usize = 0;
pub const RIGHT_EYE_OUTER: usize = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub image_size: usize,
    /// Half width of the head ellipse, pixels.
    pub head_half_width: [f64; 2],
    /// Head half height over half width.
    pub head_aspect: [f64; 2],
    pub max_rotation_deg: f64,
    /// Maximum head-center offset from the image center, pixels.
    pub max_translation: f64,
    /// Global exposure gain and saturation, the per-photo capture variation.
    pub exposure: [f64; 2],
    pub saturation: [f64; 2],
    /// Subsamples per pixel side.
    pub supersample: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            image_size: 64,
            head_half_width: [15.0, 19.0],
            head_aspect: [1.15, 1.3],
            max_rotation_deg: 12.0,
            max_translation: 5.0,
            exposure: [0.85, 1.1],
            saturation: [0.75, 1.0],
            supersample: 4,
        }
    }
}

/// Sampled geometry and colors of one face, in image coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceGeometry {
    pub center: Point,
    pub rotation: f64,
    pub head: [f64; 2],
    pub eye_offset: [f64; 2],
    pub eye_axes: [f64; 2],
    pub nose_tip_y: f64,
    pub nose_half_width: f64,
    pub nose_length: f64,
    pub mouth_y: f64,
    pub mouth_axes: [f64; 2],
    pub skin: [f32; 3],
    pub iris: [f32; 3],
    pub lips: [f32; 3],
    pub hair: [f32; 3],
    /// Hairline height as a fraction of the head half height above the center.
    pub hairline: f64,
    pub background: [f32; 3],
    pub texture: [[f64; 4]; 3],
    pub light_dir: [f64; 2],
    pub light_strength: f64,
    pub exposure: f64,
    pub saturation: f64,
    pub noise_seed: u64,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    }
}

fn jitter<R: Rng + ?Sized>(rng: &mut R, base: [f32; 3], amount: f32) -> [f32; 3] {
    base.map(|c| (c + rng.random_range(-amount..amount)).clamp(0.0, 1.0))
}

impl FaceGeometry {
    pub fn sample<R: Rng + ?Sized>(params: &SynthParams, rng: &mut R) -> Self {
        let size = params.image_size as f64;
        let a = uniform(rng, params.head_half_width);
        let b = a * uniform(rng, params.head_aspect);
        let rotation = uniform(rng, [-params.max_rotation_deg, params.max_rotation_deg]).to_radians();
        let t = params.max_translation;
        let mut center = [size / 2.0 + uniform(rng, [-t, t]), size / 2.0 + uniform(rng, [-t, t])];
        let (hx, hy) = head_extent(a, b, rotation);
        for (axis, half) in [(0, hx), (1, hy)] {
            center[axis] = center[axis].clamp(half + 1.0, (size - half - 1.0).max(half + 1.0));
        }
        let eye_w = a * uniform(rng, [0.17, 0.22]);
        let skin_base = [[0.92, 0.76, 0.62], [0.80, 0.60, 0.45], [0.62, 0.44, 0.32], [0.98, 0.85, 0.74]];
        let base = skin_base[rng.random_range(0..skin_base.len())];
        let skin = jitter(rng, base, 0.05);
        let background = [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)];
        let mut texture = [[0.0; 4]; 3];
        for wave in &mut texture {
            *wave = [
                rng.random_range(0.05..0.35),
                rng.random_range(0.05..0.35),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.03..0.12),
            ];
        }
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let hair_base = [[0.05, 0.04, 0.03], [0.17, 0.10, 0.05], [0.10, 0.08, 0.07]][rng.random_range(0..3)];
        Self {
            center,
            rotation,
            head: [a, b],
            eye_offset: [a * uniform(rng, [0.40, 0.48]), b * uniform(rng, [0.15, 0.25])],
            eye_axes: [eye_w, eye_w * uniform(rng, [0.42, 0.55])],
            nose_tip_y: b * uniform(rng, [0.18, 0.28]),
            nose_half_width: a * uniform(rng, [0.10, 0.15]),
            nose_length: b * uniform(rng, [0.22, 0.3]),
            mouth_y: b * uniform(rng, [0.5, 0.6]),
            mouth_axes: [a * uniform(rng, [0.28, 0.36]), b * uniform(rng, [0.06, 0.1])],
            skin,
            iris: jitter(rng, [0.2, 0.14, 0.1], 0.08),
            lips: jitter(rng, [0.72, 0.25, 0.28], 0.08),
            hair: jitter(rng, hair_base, 0.03),
            hairline: uniform(rng, [0.55, 0.75]),
            background,
            texture,
            light_dir: [angle.cos(), angle.sin()],
            light_strength: rng.random_range(0.0..0.25),
            exposure: uniform(rng, params.exposure),
            saturation: uniform(rng, params.saturation),
            noise_seed: rng.random(),
        }
    }

    /// Face-frame point to image coordinates.
    pub fn to_image(&self, u: Point) -> Point {
        let (s, c) = self.rotation.sin_cos();
        [self.center[0] + c * u[0] - s * u[1], self.center[1] + s * u[0] + c * u[1]]
    }

    pub fn to_face(&self, p: Point) -> Point {
        let (s, c) = self.rotation.sin_cos();
        let (dx, dy) = (p[0] - self.center[0], p[1] - self.center[1]);
        [c * dx + s * dy, -s * dx + c * dy]
    }

    /// The five landmarks, in face-frame coordinates.
    pub fn landmarks_face_frame(&self) -> [Point; SYNTH_LANDMARKS] {
        let [ex, ey] = self.eye_offset;
        let ew = self.eye_axes[0];
        let mw = self.mouth_axes[0];
        [[-ex - ew, -ey], [ex + ew, -ey], [0.0, self.nose_tip_y], [-mw, self.mouth_y], [mw, self.mouth_y]]
    }

    pub fn landmarks(&self) -> Vec<Point> {
        self.landmarks_face_frame().iter().map(|&u| self.to_image(u)).collect()
    }

    /// Axis-aligned bounds of the rotated head ellipse.
    pub fn bbox(&self) -> BBox {
        let (hx, hy) = head_extent(self.head[0], self.head[1], self.rotation);
        BBox::new(self.center[0] - hx, self.center[1] - hy, self.center[0] + hx, self.center[1] + hy)
    }

    fn shade(&self, p: Point) -> [f64; 3] {
        let u = self.to_face(p);
        let [a, b] = self.head;
        let bg = self.background_at(p);
        let r2 = (u[0] / a).powi(2) + (u[1] / b).powi(2);
        let crown = (u[0] / (1.1 * a)).powi(2) + ((u[1] + 0.05 * b) / (1.12 * b)).powi(2) <= 1.0;
        if r2 > 1.0 {
            return if crown && u[1] < -0.15 * b { self.hair.map(f64::from) } else { bg };
        }
        if u[1] < -self.hairline * b {
            return self.hair.map(f64::from);
        }
        let light = 1.0 + self.light_strength * (self.light_dir[0] * u[0] / a + self.light_dir[1] * u[1] / b);
        let lit = |c: [f32; 3]| c.map(|v| v as f64 * light);
        let [ex, ey] = self.eye_offset;
        let [ew, eh] = self.eye_axes;
        for sx in [-1.0, 1.0] {
            let (dx, dy) = (u[0] - sx * ex, u[1] + ey);
            if (dx / ew).powi(2) + (dy / eh).powi(2) <= 1.0 {
                let (r, pupil) = (0.85 * eh, 0.4 * eh);
                let d2 = dx * dx + dy * dy;
                return if d2 <= pupil * pupil {
                    [0.03; 3]
                } else if d2 <= r * r {
                    lit(self.iris)
                } else {
                    lit([0.96, 0.96, 0.94])
                };
            }
        }
        let [mw, mh] = self.mouth_axes;
        if (u[0] / mw).powi(2) + ((u[1] - self.mouth_y) / mh).powi(2) <= 1.0 {
            return lit(self.lips);
        }
        let base_y = self.nose_tip_y - self.nose_length;
        if u[1] <= self.nose_tip_y && u[1] >= base_y {
            let half = self.nose_half_width * (self.nose_tip_y - u[1]) / self.nose_length;
            if u[0].abs() <= half {
                return lit(self.skin.map(|v| v * 0.82));
            }
        }
        lit(self.skin)
    }

    fn background_at(&self, p: Point) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (c, wave) in self.texture.iter().enumerate() {
            let [fx, fy, phase, amp] = *wave;
            let v = self.background[c] as f64 + amp * (fx * p[0] + fy * p[1] + phase).sin();
            let grain = hash_noise(self.noise_seed.wrapping_add(c as u64), p[0].floor() as i64, p[1].floor() as i64);
            out[c] = v + 0.04 * (grain - 0.5);
        }
        out
    }

    pub fn render(&self, params: &SynthParams) -> RgbImage {
        let size = params.image_size;
        let ss = params.supersample.max(1);
        let inv = 1.0 / (ss * ss) as f64;
        RgbImage::from_fn(size, size, |x, y| {
            let mut acc = [0.0f64; 3];
            for i in 0..ss {
                for j in 0..ss {
                    let p = [x as f64 + (i as f64 + 0.5) / ss as f64, y as f64 + (j as f64 + 0.5) / ss as f64];
                    let c = self.shade(p);
                    for k in 0..3 {
                        acc[k] += c[k];
                    }
                }
            }
            let rgb = acc.map(|v| (v * inv * self.exposure).clamp(0.0, 1.0) as f32);
            let y = luma(rgb[0], rgb[1], rgb[2]);
            rgb.map(|v| (y + self.saturation as f32 * (v - y)).clamp(0.0, 1.0))
        })
        .expect("render geometry")
    }
}

fn head_extent(a: f64, b: f64, rotation: f64) -> (f64, f64) {
    let (s, c) = rotation.sin_cos();
    ((a * a * c * c + b * b * s * s).sqrt(), (a * a * s * s + b * b * c * c).sqrt())
}

/// Hash of integer pixel coordinates to `[0, 1)`.
fn hash_noise(seed: u64, x: i64, y: i64) -> f64 {
    let mut h = seed ^ (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Renders one face and its record. `id` names both the record and the image file.
pub fn synth_face<R: Rng + ?Sized>(params: &SynthParams, id: &str, rng: &mut R) -> (FaceRecord, RgbImage) {
    let geom = FaceGeometry::sample(params, rng);
    let image = geom.render(params);
    let record = FaceRecord {
        id: id.to_string(),
        image: default_image_path(id),
        bbox: geom.bbox(),
        annotation: LandmarkAnnotation::all_visible(geom.landmarks()),
        style_tag: Some(StyleLabel::Original.name().into()),
    };
    (record, image)
}

pub fn record_id(index: usize) -> String {
    format!("face_{index:05}")
}

/// Renders `count` faces in memory; face `i` depends only on `(params, seed, i)`.
pub fn synth_faces(params: &SynthParams, count: usize, seed: u64) -> Vec<(FaceRecord, RgbImage)> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::stage_rng(seed, &format!("face-{i}"));
            synth_face(params, &record_id(i), &mut rng)
        })
        .collect()
}

/// Writes `count` faces under `dir` (`images/` plus `<name>.json`) and returns
/// the manifest.
pub fn generate_synthetic_dataset(
    params: &SynthParams,
    count: usize,
    seed: u64,
    dir: &Path,
    name: &str,
    split: Split,
) -> Result<DatasetManifest> {
    let faces = synth_faces(params, count, seed);
    faces
        .par_iter()
        .map(|(record, image)| {
            image
                .save_png(&dir.join(&record.image))
                .map_err(|e| Error::Record { id: record.id.clone(), source: Box::new(e) })
        })
        .collect::<Result<Vec<()>>>()?;
    let mut manifest = DatasetManifest::new(name, split, StyleLabel::Original, SYNTH_LANDMARKS);
    manifest.records = faces.into_iter().map(|(r, _)| r).collect();
    write_manifest(&manifest, &dir.join(format!("{name}.json")))?;
    Ok(manifest)
}
