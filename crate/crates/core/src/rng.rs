//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha8 stream addressed by
//! `(seed, stream id)`. Streams are independent, so reordering or
//! parallelizing consumers never changes what any one consumer sees, and
//! identical seeds reproduce identical runs bit for bit.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG for `(seed, stream)`. Distinct streams under the same
/// seed never overlap.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard normal draw via Box-Muller. Consumes exactly two uniforms, so
/// draw counts stay predictable across code paths.
pub fn randn<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
