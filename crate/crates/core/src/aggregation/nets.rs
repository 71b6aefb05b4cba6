use rand::Rng;
use sanlite_numerics::{Bound, Float, Parameters, Tape, Var};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::imaging::RgbImage;
use crate::nets::{self, Init};

/// An image-to-image map that can be recorded on a tape.
pub trait Translator<T: Float> {
    /// Records parameters as trainable leaves (`trainable`) or constants.
    fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Result<Bound>;
    /// `[N, 3, H, W]` in `[0, 1]` to the same shape in `[0, 1]`.
    fn forward(&self, tape: &mut Tape<T>, bound: &Bound, x: Var) -> Result<Var>;
}

/// Passes its input through unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityTranslator;

impl<T: Float> Translator<T> for IdentityTranslator {
    fn bind(&self, _tape: &mut Tape<T>, _trainable: bool) -> Result<Bound> {
        Ok(Bound::default())
    }

    fn forward(&self, _tape: &mut Tape<T>, _bound: &Bound, x: Var) -> Result<Var> {
        Ok(x)
    }
}

/// Maps every pixel to a constant value.
#[derive(Clone, Copy, Debug)]
pub struct ConstantTranslator(pub f64);

impl<T: Float> Translator<T> for ConstantTranslator {
    fn bind(&self, _tape: &mut Tape<T>, _trainable: bool) -> Result<Bound> {
        Ok(Bound::default())
    }

    fn forward(&self, tape: &mut Tape<T>, _bound: &Bound, x: Var) -> Result<Var> {
        let zero = tape.scale(x, 0.0)?;
        Ok(tape.add_scalar(zero, self.0)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub base_channels: usize,
    pub residual_blocks: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self { base_channels: 8, residual_blocks: 2 }
    }
}

/// Encoder-decoder: two 2x downsampling stages, residual blocks at 1/4
/// resolution, two nearest-upsample + conv stages, `0.5 * (tanh + 1)` output.
#[derive(Clone, Debug)]
pub struct Generator<T = f32> {
    pub config: GeneratorConfig,
    pub params: Parameters<T>,
}

impl<T: Float> Generator<T> {
    pub fn new<R: Rng + ?Sized>(config: GeneratorConfig, rng: &mut R) -> Self {
        let c = config.base_channels;
        let mut p = Parameters::new();
        nets::add_conv(&mut p, "enc0", 3, c, 3, Init::He, rng);
        nets::add_conv(&mut p, "enc1", c, 2 * c, 3, Init::He, rng);
        nets::add_conv(&mut p, "enc2", 2 * c, 4 * c, 3, Init::He, rng);
        for i in 0..config.residual_blocks {
            nets::add_conv(&mut p, &format!("res{i}.a"), 4 * c, 4 * c, 3, Init::He, rng);
            nets::add_conv(&mut p, &format!("res{i}.b"), 4 * c, 4 * c, 3, Init::Gaussian(0.01), rng);
        }
        nets::add_conv(&mut p, "dec1", 4 * c, 2 * c, 3, Init::He, rng);
        nets::add_conv(&mut p, "dec0", 2 * c, c, 3, Init::He, rng);
        nets::add_conv(&mut p, "out", c, 3, 3, Init::Gaussian(0.02), rng);
        Self { config, params: p }
    }

    /// Runs the generator on one image without recording gradients.
    pub fn apply(&self, img: &RgbImage) -> Result<RgbImage> {
        apply_translator(self, img)
    }
}

impl<T: Float> Translator<T> for Generator<T> {
    fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Result<Bound> {
        Ok(if trainable { self.params.bind(tape)? } else { self.params.bind_frozen(tape)? })
    }

    fn forward(&self, tape: &mut Tape<T>, bound: &Bound, x: Var) -> Result<Var> {
        let shape = tape.value(x).shape().to_vec();
        if shape.len() != 4 || shape[2] % 4 != 0 || shape[3] % 4 != 0 {
            return Err(invalid(format!("generator input must be [N, 3, H, W] with H, W divisible by 4, got {shape:?}")));
        }
        let mut h = nets::center_input(tape, x)?;
        h = nets::conv_relu(tape, bound, "enc0", h)?;
        h = tape.avg_pool2(h)?;
        h = nets::conv_relu(tape, bound, "enc1", h)?;
        h = tape.avg_pool2(h)?;
        h = nets::conv_relu(tape, bound, "enc2", h)?;
        for i in 0..self.config.residual_blocks {
            let r = nets::conv_relu(tape, bound, &format!("res{i}.a"), h)?;
            let r = nets::conv(tape, bound, &format!("res{i}.b"), r)?;
            h = tape.add(h, r)?;
        }
        h = tape.upsample_nearest2(h)?;
        h = nets::conv_relu(tape, bound, "dec1", h)?;
        h = tape.upsample_nearest2(h)?;
        h = nets::conv_relu(tape, bound, "dec0", h)?;
        h = nets::conv(tape, bound, "out", h)?;
        let t = tape.tanh(h)?;
        let t = tape.add_scalar(t, 1.0)?;
        Ok(tape.scale(t, 0.5)?)
    }
}

pub fn apply_translator<T: Float, G: Translator<T> + ?Sized>(g: &G, img: &RgbImage) -> Result<RgbImage> {
    let mut tape = Tape::new();
    let bound = g.bind(&mut tape, false)?;
    let x = tape.constant(img.to_tensor::<T>())?;
    let y = g.forward(&mut tape, &bound, x)?;
    RgbImage::from_tensor(tape.value(y), 0)
}

/// Patch-level least-squares critic producing a `[N, 1, H/4, W/4]` score map.
#[derive(Clone, Debug)]
pub struct Discriminator<T = f32> {
    pub params: Parameters<T>,
}

impl<T: Float> Discriminator<T> {
    pub fn new<R: Rng + ?Sized>(base_channels: usize, rng: &mut R) -> Self {
        let c = base_channels;
        let mut p = Parameters::new();
        nets::add_conv(&mut p, "d0", 3, c, 3, Init::He, rng);
        nets::add_conv(&mut p, "d1", c, 2 * c, 3, Init::He, rng);
        nets::add_conv(&mut p, "d2", 2 * c, 4 * c, 3, Init::He, rng);
        nets::add_conv(&mut p, "score", 4 * c, 1, 3, Init::Gaussian(0.02), rng);
        Self { params: p }
    }

    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Result<Bound> {
        Ok(if trainable { self.params.bind(tape)? } else { self.params.bind_frozen(tape)? })
    }

    pub fn forward(&self, tape: &mut Tape<T>, bound: &Bound, x: Var) -> Result<Var> {
        let mut h = nets::center_input(tape, x)?;
        for (i, name) in ["d0", "d1", "d2"].into_iter().enumerate() {
            h = nets::conv(tape, bound, name, h)?;
            h = tape.leaky_relu(h, 0.2)?;
            if i < 2 {
                h = tape.avg_pool2(h)?;
            }
        }
        nets::conv(tape, bound, "score", h)
    }
}
