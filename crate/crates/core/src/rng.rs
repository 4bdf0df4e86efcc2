//! Counter-based random streams.
//!
//! Every run draws from its own generator whose seed is a mix of the root
//! seed, a stream id (typically a design-point index) and a run counter, so
//! results do not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, stream: u64, counter: u64) -> u64 {
    let a = splitmix64(root);
    let b = splitmix64(a ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    splitmix64(b ^ counter.wrapping_mul(0x8CB9_2BA7_2F3D_8DD7))
}

pub fn stream_rng(root: u64, stream: u64, counter: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(root, stream, counter))
}

/// Seeds for the runs that estimate one probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeeds {
    pub root: u64,
    pub stream: u64,
}

impl RunSeeds {
    pub fn new(root: u64, stream: u64) -> Self {
        Self { root, stream }
    }

    pub fn rng(&self, run: u64) -> SimRng {
        stream_rng(self.root, self.stream, run)
    }
}
