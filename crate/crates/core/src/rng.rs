//! Reproducible random streams.
//!
//! Every consumer derives its generator from `(seed, domain, index)` so that
//! results do not depend on iteration or thread scheduling order.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

/// Stream domains. Distinct domains never share a ChaCha key.
pub mod domain {
    pub const CHANNEL: u64 = 1;
    pub const INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const EVAL_NOISE: u64 = 5;
    pub const SENSING: u64 = 6;
    pub const BENCH: u64 = 7;
}

pub fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let key = seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

pub fn standard_normal<T: Real>(rng: &mut impl Rng) -> T {
    T::lit(rng.sample::<f64, _>(StandardNormal))
}

/// Circularly-symmetric complex Gaussian with the given variance.
pub fn complex_gaussian<T: Real>(rng: &mut impl Rng, variance: T) -> Complex<T> {
    let s = (variance * T::lit(0.5)).sqrt();
    Complex::new(standard_normal::<T>(rng) * s, standard_normal::<T>(rng) * s)
}

/// Unit-magnitude phasor with uniform phase.
pub fn random_phase<T: Real>(rng: &mut impl Rng) -> Complex<T> {
    let theta = T::lit(rng.random::<f64>() * std::f64::consts::TAU);
    Complex::new(theta.cos(), theta.sin())
}
