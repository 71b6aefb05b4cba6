use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use sanlite_numerics::{Float, Tensor};

use crate::error::{io_err, Error, Result};

/// Three-channel image with planar `[channel][row][col]` storage and
/// values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl RgbImage {
    /// Builds an image from planar data, clamping every value into `[0, 1]`.
    pub fn from_planar(width: usize, height: usize, mut data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Invalid(format!("image size {width}x{height} must be positive")));
        }
        if data.len() != 3 * width * height {
            return Err(Error::Invalid(format!(
                "{}x{} image needs {} values, got {}",
                width,
                height,
                3 * width * height,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("image contains non-finite values".into()));
        }
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(3 * width * height);
        for c in rgb {
            data.extend(std::iter::repeat_n(c.clamp(0.0, 1.0), width * height));
        }
        Self { width: width.max(1), height: height.max(1), data }
    }

    /// Evaluates `f(x, y) -> rgb` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Result<Self> {
        let plane = width * height;
        let mut data = vec![0.0; 3 * plane];
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                for c in 0..3 {
                    data[c * plane + y * width + x] = px[c];
                }
            }
        }
        Self::from_planar(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let n = self.width * self.height;
        let i = y * self.width + x;
        [self.data[i], self.data[n + i], self.data[2 * n + i]]
    }

    /// True when R = G = B at every pixel.
    pub fn is_gray(&self) -> bool {
        let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
        r.iter().zip(g).zip(b).all(|((r, g), b)| r == g && g == b)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect(),
        }
    }

    /// `[1, 3, H, W]` tensor.
    pub fn to_tensor<T: Float>(&self) -> Tensor<T> {
        Tensor::new(
            vec![1, 3, self.height, self.width],
            self.data.iter().map(|&v| T::from_f32_lossy(v)).collect(),
        )
        .expect("image tensor shape")
    }

    /// Inverse of [`RgbImage::to_tensor`] for one batch item; values are clamped.
    pub fn from_tensor<T: Float>(t: &Tensor<T>, index: usize) -> Result<Self> {
        let (_, c, h, w) = t.dims4("image")?;
        if c != 3 {
            return Err(Error::Invalid(format!("expected 3 channels, got {c}")));
        }
        let per = 3 * h * w;
        let data = t.data()[index * per..(index + 1) * per].iter().map(|v| v.to_f32_lossy()).collect();
        Self::from_planar(w, h, data)
    }

    pub fn max_abs_diff(&self, other: &RgbImage) -> f32 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max)
    }

    /// 8-bit interleaved RGB using `round(v * 255)`.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let n = self.width * self.height;
        let mut out = Vec::with_capacity(3 * n);
        for i in 0..n {
            for c in 0..3 {
                out.push(quantize(self.data[c * n + i]));
            }
        }
        out
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        let n = width * height;
        if bytes.len() != 3 * n {
            return Err(Error::Invalid(format!("expected {} bytes, got {}", 3 * n, bytes.len())));
        }
        let mut data = vec![0.0; 3 * n];
        for i in 0..n {
            for c in 0..3 {
                data[c * n + i] = bytes[3 * i + c] as f32 / 255.0;
            }
        }
        Self::from_planar(width, height, data)
    }

    /// Round-trips through 8-bit quantization, matching what a PNG on disk holds.
    pub fn quantized(&self) -> Self {
        Self::from_rgb8(self.width, self.height, &self.to_rgb8()).expect("same geometry")
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let file = File::create(path).map_err(io_err(path))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let img_err = |e: png::EncodingError| Error::Image { path: path.to_path_buf(), message: e.to_string() };
        let mut writer = enc.write_header().map_err(img_err)?;
        writer.write_image_data(&self.to_rgb8()).map_err(img_err)?;
        writer.finish().map_err(img_err)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(io_err(path))?;
        let img_err = |e: png::DecodingError| Error::Image { path: path.to_path_buf(), message: e.to_string() };
        let mut dec = png::Decoder::new(std::io::BufReader::new(file));
        dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = dec.read_info().map_err(img_err)?;
        let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
        let info = reader.next_frame(&mut buf).map_err(img_err)?;
        let (w, h) = (info.width as usize, info.height as usize);
        let bytes = &buf[..info.buffer_size()];
        let rgb: Vec<u8> = match info.color_type {
            png::ColorType::Rgb => bytes.to_vec(),
            png::ColorType::Rgba => bytes.chunks(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
            png::ColorType::Grayscale => bytes.iter().flat_map(|&v| [v, v, v]).collect(),
            png::ColorType::GrayscaleAlpha => bytes.chunks(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
            other => {
                return Err(Error::Image { path: path.to_path_buf(), message: format!("unsupported color type {other:?}") })
            }
        };
        Self::from_rgb8(w, h, &rgb)
    }
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_exact_after_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbImage::from_fn(7, 5, |x, y| [x as f32 / 7.0, y as f32 / 5.0, 0.33]).unwrap();
        let path = dir.path().join("a/b.png");
        img.save_png(&path).unwrap();
        let back = RgbImage::load_png(&path).unwrap();
        assert_eq!(back, img.quantized());
        assert!(back.max_abs_diff(&img) <= 0.5 / 255.0 + 1e-6);
    }

    #[test]
    fn values_are_clamped() {
        let img = RgbImage::from_planar(1, 1, vec![-1.0, 0.5, 2.0]).unwrap();
        assert_eq!(img.pixel(0, 0), [0.0, 0.5, 1.0]);
        assert!(RgbImage::from_planar(0, 1, vec![]).is_err());
        assert!(RgbImage::from_planar(1, 1, vec![f32::NAN, 0.0, 0.0]).is_err());
    }
}
