//! Seeded weight initializers.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::float::Float;
use crate::tensor::Tensor;

/// Zero-mean Gaussian with the given standard deviation. Samples are drawn in
/// f64 so f32 and f64 models built from one seed agree up to rounding.
pub fn gaussian<T: Float, R: Rng + ?Sized>(shape: impl Into<Vec<usize>>, std: f64, rng: &mut R) -> Tensor<T> {
    let normal = Normal::new(0.0, std).expect("finite, non-negative std");
    Tensor::from_fn(shape, |_| T::from_f64_lossy(normal.sample(rng)))
}

/// Fan-in scaled Gaussian, `std = sqrt(2 / fan_in)`.
pub fn he_normal<T: Float, R: Rng + ?Sized>(shape: impl Into<Vec<usize>>, rng: &mut R) -> Tensor<T> {
    let shape = shape.into();
    let fan_in: usize = shape[1..].iter().product::<usize>().max(1);
    gaussian(shape, (2.0 / fan_in as f64).sqrt(), rng)
}
