//! Deterministic random number generation.
//!
//! One 64-bit seed governs a whole run. Per-sample streams are derived as
//! `hash(seed, sample_id)`, so the draws for a given sample do not depend on
//! processing order or thread count. The generator core is ChaCha8, a
//! counter-based stream cipher whose output is stable across platforms.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Source of uniform draws consumed by the augmentation procedure. The
/// production implementation is [`SeededRng`]; tests substitute scripted
/// transcripts to pin branch decisions.
pub trait UniformSource {
    /// A draw intended to be uniform on `[lo, hi)`.
    fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64>;
}

/// Reproducible RNG: equal seeds produce bit-identical draw sequences.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

impl SeededRng {
    /// The master stream for a run.
    pub fn new(seed: u64) -> SeededRng {
        SeededRng::from_parts(seed, 0)
    }

    /// An independent stream for one sample, derived from the run seed and
    /// the sample id.
    pub fn for_sample(seed: u64, sample_id: &str) -> SeededRng {
        SeededRng::from_parts(seed, fnv1a64(sample_id.as_bytes()))
    }

    fn from_parts(seed: u64, stream: u64) -> SeededRng {
        let mut key = [0u8; 32];
        let mut state = seed ^ mix64(stream);
        for chunk in key.chunks_exact_mut(8) {
            state = state.wrapping_add(GOLDEN_GAMMA);
            chunk.copy_from_slice(&mix64(state).to_le_bytes());
        }
        SeededRng {
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    /// Uniform draw on [0,1) with 53 bits of precision.
    pub fn next_unit(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Largest f64 strictly below `x` (for finite positive spans).
fn next_below(x: f64) -> f64 {
    if x > 0.0 {
        f64::from_bits(x.to_bits() - 1)
    } else if x == 0.0 {
        -f64::MIN_POSITIVE
    } else {
        f64::from_bits(x.to_bits() + 1)
    }
}

impl UniformSource for SeededRng {
    /// Uniform on `[lo, hi)`; the degenerate interval `lo == hi` returns
    /// `lo` (and still consumes one draw, keeping transcripts aligned).
    fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo <= hi) {
            return Err(Error::invalid(format!(
                "uniform bounds out of order: lo={lo}, hi={hi}"
            )));
        }
        let u = self.next_unit();
        let v = lo + u * (hi - lo);
        // Rounding can land exactly on hi for spans much smaller than |hi|.
        if v >= hi && lo < hi {
            return Ok(next_below(hi).max(lo));
        }
        Ok(v)
    }
}
