//! Seeded sampling helpers.
//!
//! Every randomized routine in this crate draws from a ChaCha8 generator
//! seeded with a caller-supplied u64, using one generator per logical stream
//! (`set_stream`) so that draws for one purpose never shift another. Normal
//! deviates use the trigonometric Box-Muller transform, cosine branch; each
//! deviate consumes exactly two uniform doubles, which keeps the stream
//! layout independent of the values drawn.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One standard-normal deviate; consumes exactly two uniforms.
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1 = 1.0 - rng.random::<f64>(); // (0, 1], keeps ln finite
    let u2 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Uniform on [-a, a].
pub fn symmetric_uniform<R: Rng>(rng: &mut R, a: f64) -> f64 {
    a * (2.0 * rng.random::<f64>() - 1.0)
}
