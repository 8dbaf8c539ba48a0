//! Seeded random streams.
//!
//! Every stochastic step takes an explicit generator. Float conversion uses
//! the top 53 bits of a `u64`, so draws are identical on every platform.

use rand_core::{RngCore, SeedableRng};

pub use rand_chacha::ChaCha8Rng as Rng;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Independent substream derived from a base seed and a stream label.
pub fn substream(seed: u64, label: u64) -> Rng {
    let mut r = Rng::seed_from_u64(seed);
    r.set_stream(label);
    r
}

/// Uniform draw in `[0, 1)`.
#[inline]
pub fn unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in `[lo, hi)`.
#[inline]
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit(rng)
}

/// Uniform integer in `0..n` (`n > 0`), Lemire's multiply-shift without rejection.
#[inline]
pub fn below<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> usize {
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}
