//! Seed derivation.
//!
//! Every random stream is a ChaCha8 generator seeded with
//! `derive(master, path)`, where `path` is a short list of integers naming
//! the stream (for example `[TRIAL, trial, VERTEX, v]`). The derivation folds
//! each path element into the state with the SplitMix64 finalizer:
//!
//! ```text
//! h = splitmix(master)
//! for x in path: h = splitmix(h ^ splitmix(x + 0x9E3779B97F4A7C15))
//! ```
//!
//! Results therefore do not depend on the order in which streams are used.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub type StreamRng = ChaCha8Rng;

/// Tag for per-trial streams.
pub const TRIAL: u64 = 1;
/// Tag for per-vertex streams.
pub const VERTEX: u64 = 2;
/// Tag for per-phase streams.
pub const PHASE: u64 = 3;
/// Tag for per-scale streams.
pub const SCALE: u64 = 4;
/// Tag for solver streams.
pub const SOLVER: u64 = 5;
/// Tag for per-layer streams.
pub const LAYER: u64 = 6;
/// Tag for sampling streams.
pub const SAMPLE: u64 = 7;

pub fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed and a stream path.
pub fn derive(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(master), |h, &x| {
        splitmix(h ^ splitmix(x.wrapping_add(0x9E37_79B9_7F4A_7C15)))
    })
}

/// Generator for the stream `path` under `master`.
pub fn stream(master: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive(master, path))
}

/// Uniform real in `[0, 1)` with 53 random bits.
pub fn unit_f64<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in `0..n` (`n > 0`) by rejection, free of modulo bias.
pub fn below<R: RngCore + ?Sized>(rng: &mut R, n: u64) -> u64 {
    debug_assert!(n > 0);
    let zone = u64::MAX - (u64::MAX - n + 1) % n;
    loop {
        let x = rng.next_u64();
        if x <= zone {
            return x % n;
        }
    }
}
