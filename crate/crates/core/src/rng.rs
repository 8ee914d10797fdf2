//! Deterministic RNG streams. Every rollout, bootstrap trial and experiment
//! cell draws from its own ChaCha stream, so results never depend on thread
//! scheduling.

use crate::linalg::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha20Rng;

/// Stream `index` of the generator keyed by `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// SplitMix64 finalizer; derives child seeds from `(seed, tag)`.
pub fn mix(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Matrix of i.i.d. `N(0, sigma²)` entries, filled column by column.
pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, sigma: f64) -> Mat {
    Mat::from_fn(rows, cols, |_, _| sigma * rng.sample::<f64, _>(StandardNormal))
}
