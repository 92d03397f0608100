//! Reproducible seed derivation.
//!
//! Every random consumer (signal generation, one SSA run, one GA level)
//! gets its own `u64` seed derived from the master seed, a purpose tag and
//! a path of indices. Derivation folds the words through the SplitMix64
//! finalizer, so the result depends only on the inputs and never on
//! evaluation order. Derived seeds feed [`ChaCha8Rng::seed_from_u64`],
//! a portable generator with a fixed, documented algorithm.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Signal,
    Ssa,
    OuterGa,
    InnerGa,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Signal => 0x5349_474e,
            Purpose::Ssa => 0x0053_5341,
            Purpose::OuterGa => 0x4f47_4131,
            Purpose::InnerGa => 0x4947_4132,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `seed = mix(...mix(mix(master) ^ tag) ^ path[0] ...)`.
pub fn derive_seed(master: u64, purpose: Purpose, path: &[u64]) -> u64 {
    let mut h = splitmix64(master) ^ purpose.tag();
    h = splitmix64(h);
    for &p in path {
        h = splitmix64(h ^ p);
    }
    h
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derive_rng(master: u64, purpose: Purpose, path: &[u64]) -> Rng {
    rng_from_seed(derive_seed(master, purpose, path))
}
