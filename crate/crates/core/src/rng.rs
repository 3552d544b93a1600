//! Deterministic seed derivation.
//!
//! Every sample gets its own ChaCha stream keyed by a path of labels, so
//! estimators are pure functions of (seed, sample index) and independent of
//! worker count and scheduling. Nested estimators extend the path.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step; the standard finalizer used to spread seed bits.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A node in the seed-derivation tree.
#[derive(Debug, Clone, Copy)]
pub struct SeedTree {
    state: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> SeedTree {
        SeedTree { state: splitmix64(root ^ 0x51ed_2701_8d9f_3c2b) }
    }

    /// Child node for a labelled branch.
    pub fn child(&self, label: u64) -> SeedTree {
        SeedTree { state: splitmix64(self.state ^ splitmix64(label)) }
    }

    /// Leaf RNG for this node.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.state)
    }

    /// Shorthand: RNG for the i-th sample under this node.
    pub fn sample_rng(&self, index: u64) -> ChaCha8Rng {
        self.child(index).rng()
    }
}
