//! Seeded randomness. Every stochastic routine takes an explicit `u64` seed and
//! builds its generator through [`seeded`], so outputs are bit-reproducible.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type DetRng = Xoshiro256PlusPlus;

/// xoshiro256++ whose 256-bit state is expanded from `seed` by splitmix64.
pub fn seeded(seed: u64) -> DetRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Derives an independent stream seed for a named sub-task.
pub fn derive(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn normal(rng: &mut DetRng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn uniform(rng: &mut DetRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Index drawn from an unnormalized categorical distribution.
pub fn categorical(rng: &mut DetRng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}
