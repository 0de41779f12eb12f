//! Seed derivation for schedule-independent randomness.
//!
//! Every unit of parallel work (a feature, a repeat, a perturbation level)
//! draws from its own generator seeded by mixing the master seed with the
//! unit's coordinates, so results never depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type WorkRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a master seed with a sequence of work-unit coordinates.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_for(seed: u64, parts: &[u64]) -> WorkRng {
    WorkRng::seed_from_u64(derive_seed(seed, parts))
}

/// Stream tags so different operations never share a derived stream.
pub(crate) mod stream {
    pub const SPLIT: u64 = 1;
    pub const CARVE: u64 = 2;
    pub const PFI: u64 = 3;
    pub const LIME: u64 = 4;
    pub const SHAP_BACKGROUND: u64 = 5;
    pub const SHAP_COALITIONS: u64 = 6;
    pub const CALIBRATION: u64 = 7;
    pub const ROBUSTNESS: u64 = 8;
    pub const KMEANS: u64 = 9;
}
