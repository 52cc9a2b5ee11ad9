//! Seeded random streams. All randomness in the crate flows through here.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `index` under `seed`; used for per-record generation.
pub fn stream(seed: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Fisher-Yates shuffle drawing `next_u64() % (i + 1)` for i = n-1 down to 1.
pub fn shuffle<T>(items: &mut [T], rng: &mut Rng) {
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

/// Uniform draw on [0, 1) with 53 bits of resolution.
#[inline]
pub fn unit(rng: &mut Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Bernoulli(p) draw.
#[inline]
pub fn bernoulli(rng: &mut Rng, p: f64) -> bool {
    unit(rng) < p
}
