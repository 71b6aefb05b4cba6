//! Small helpers shared by the convnets: named parameter creation and
//! layer application on a tape.

use rand::Rng;
use sanlite_numerics::{init, Bound, Float, Parameters, Tape, Tensor, Var};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Fan-in scaled Gaussian.
    He,
    /// Zero-mean Gaussian with this standard deviation.
    Gaussian(f64),
}

/// Registers `{name}.weight` `[cout, cin, k, k]` and a zero `{name}.bias`.
pub fn add_conv<T: Float, R: Rng + ?Sized>(
    params: &mut Parameters<T>,
    name: &str,
    cin: usize,
    cout: usize,
    k: usize,
    init: Init,
    rng: &mut R,
) {
    let shape = vec![cout, cin, k, k];
    let w = match init {
        Init::He => init::he_normal(shape, rng),
        Init::Gaussian(std) => init::gaussian(shape, std, rng),
    };
    params.insert(format!("{name}.weight"), w);
    params.insert(format!("{name}.bias"), Tensor::zeros(vec![cout]));
}

pub fn add_linear<T: Float, R: Rng + ?Sized>(params: &mut Parameters<T>, name: &str, fin: usize, fout: usize, std: f64, rng: &mut R) {
    params.insert(format!("{name}.weight"), init::gaussian(vec![fout, fin], std, rng));
    params.insert(format!("{name}.bias"), Tensor::zeros(vec![fout]));
}

/// Stride-1 "same" convolution for odd kernels.
pub fn conv<T: Float>(tape: &mut Tape<T>, bound: &Bound, name: &str, x: Var) -> Result<Var> {
    let w = bound.get(&format!("{name}.weight"))?;
    let b = bound.get(&format!("{name}.bias"))?;
    let k = tape.value(w).shape()[2];
    Ok(tape.conv2d(x, w, b, 1, k / 2)?)
}

pub fn conv_relu<T: Float>(tape: &mut Tape<T>, bound: &Bound, name: &str, x: Var) -> Result<Var> {
    let y = conv(tape, bound, name, x)?;
    Ok(tape.relu(y)?)
}

pub fn linear<T: Float>(tape: &mut Tape<T>, bound: &Bound, name: &str, x: Var) -> Result<Var> {
    let w = bound.get(&format!("{name}.weight"))?;
    let b = bound.get(&format!("{name}.bias"))?;
    Ok(tape.linear(x, w, b)?)
}

/// Maps `[0, 1]` pixel values to `[-1, 1]`.
pub fn center_input<T: Float>(tape: &mut Tape<T>, x: Var) -> Result<Var> {
    let y = tape.scale(x, 2.0)?;
    Ok(tape.add_scalar(y, -1.0)?)
}
