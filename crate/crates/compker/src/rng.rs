//! Seeded, counter-based random number generation.
//!
//! Every stochastic operation in the crate takes an explicit `u64` seed and
//! derives independent ChaCha8 sub-streams from it. Sub-stream indices are
//! assigned deterministically (per trial, per column, per block), so results
//! do not depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Number of Monte-Carlo samples handled per sub-stream block.
pub const BLOCK: usize = 1 << 16;

/// The master generator for a seed (stream 0).
pub fn master(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// An independent sub-stream of the seeded generator.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A sub-stream keyed by two indices (e.g. trajectory and chunk).
pub fn substream2(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    // Szudzik-style pairing keeps (a, b) -> stream injective.
    let stream = if a >= b { a.wrapping_mul(a).wrapping_add(a).wrapping_add(b) } else { b.wrapping_mul(b).wrapping_add(a) };
    substream(seed, stream)
}

/// Standard normal draw.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Fill a slice with standard normal draws.
pub fn fill_normal(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}
