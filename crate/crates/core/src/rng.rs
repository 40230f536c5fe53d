//! Counter-based seed derivation and complex Gaussian sampling.
//!
//! Every random stream in a campaign is keyed by `(campaign seed, snapshot
//! index, stream tag, ...)`, so the order in which workers execute never
//! changes which numbers a computation sees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::C64;

/// Stream tags for the independent random streams of one snapshot.
pub mod tag {
    pub const GEOMETRY: u64 = 1;
    pub const SHADOWING: u64 = 2;
    pub const ANGULAR: u64 = 3;
    pub const CHANNELS: u64 = 4;
    pub const PILOT_NOISE: u64 = 5;
    pub const SUBGROUPING: u64 = 6;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes a root seed with a path of counters into a child seed.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(root), |acc, &p| {
        splitmix64(acc ^ splitmix64(p.wrapping_add(0xA5A5_A5A5)))
    })
}

/// Deterministic generator for a derived stream.
pub fn stream(root: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, path))
}

/// One draw of CN(0, 1).
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}
