use rand::Rng;

use super::{Real, Tensor};

/// Weight initialisation scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// For weights feeding a ReLU.
    HeUniform,
    /// Everything else.
    GlorotUniform,
    /// Glorot scaled down tenfold, for output layers: an untrained network
    /// then predicts close to zero.
    SmallGlorot,
    Zeros,
    Ones,
}

impl Init {
    pub fn sample<T: Real, R: Rng + ?Sized>(
        self,
        shape: &[usize],
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Tensor<T> {
        match self {
            Init::HeUniform => he_uniform(shape, fan_in, rng),
            Init::GlorotUniform => glorot_uniform(shape, fan_in, fan_out, rng),
            Init::SmallGlorot => uniform(shape, 0.1 * (6.0 / (fan_in + fan_out).max(1) as f64).sqrt(), rng),
            Init::Zeros => Tensor::zeros(shape),
            Init::Ones => Tensor::full(shape, T::one()),
        }
    }
}

fn uniform<T: Real, R: Rng + ?Sized>(shape: &[usize], limit: f64, rng: &mut R) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::of(rng.gen_range(-limit..=limit)))
}

pub fn he_uniform<T: Real, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    uniform(shape, (6.0 / fan_in.max(1) as f64).sqrt(), rng)
}

pub fn glorot_uniform<T: Real, R: Rng + ?Sized>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Tensor<T> {
    uniform(shape, (6.0 / (fan_in + fan_out).max(1) as f64).sqrt(), rng)
}
