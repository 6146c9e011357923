//! Reproducible random streams.
//!
//! Every stream is a ChaCha8 generator keyed from a base seed and a path of
//! integers, e.g. `(SIMULATION, r)` for replicate `r` or
//! `(BOOTSTRAP, r, b)` for resample `b` of replicate `r`. Streams never
//! depend on scheduling, so results are identical for any worker count.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

pub const SIMULATION: u64 = 0x5349_4d55;
pub const BOOTSTRAP: u64 = 0x424f_4f54;
pub const JITTER: u64 = 0x4a49_5454;
pub const FIXTURE: u64 = 0x4649_5854;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for `path` under `seed`.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut state = seed;
    let mut h = splitmix64(&mut state);
    for &p in path {
        let mut s = h ^ p.wrapping_mul(0xd6e8_feb8_6659_fd93);
        h = splitmix64(&mut s);
    }
    let mut key = [0u8; 32];
    let mut s = h;
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Uniform on the open interval (0, 1), from the top 53 bits of one draw.
pub fn open_unit<R: RngCore>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draws by inversion of the normal CDF.
pub struct Gaussian {
    normal: Normal,
}

impl Default for Gaussian {
    fn default() -> Self {
        Self {
            normal: Normal::standard(),
        }
    }
}

impl Gaussian {
    pub fn sample<R: RngCore>(&self, rng: &mut R) -> f64 {
        self.normal.inverse_cdf(open_unit(rng))
    }
}

/// Index uniform on `0..n`.
pub fn index<R: Rng>(rng: &mut R, n: usize) -> usize {
    rng.random_range(0..n)
}
