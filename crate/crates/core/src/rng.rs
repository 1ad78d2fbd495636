//! Deterministic random streams.
//!
//! Every stochastic routine takes a [`SeedStream`] and derives one child
//! generator per (domain, index) pair. Parallel Monte Carlo loops assign one
//! substream per sample index, so results do not depend on thread scheduling,
//! and common-random-number comparisons reuse the same substreams across
//! candidates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A root seed from which independent substreams are derived.
#[derive(Debug, Clone, Copy)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Generator for sample `index` within the given domain. Distinct
    /// domains get distinct cipher keys; indices map to cipher streams.
    pub fn substream(&self, domain: u64, index: u64) -> ChaCha8Rng {
        let key = splitmix64(self.seed ^ splitmix64(domain.wrapping_add(0x9e37)));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(index);
        rng
    }

    /// A derived root for an independent sub-computation.
    pub fn derive(&self, domain: u64) -> SeedStream {
        SeedStream {
            seed: splitmix64(self.seed.wrapping_add(splitmix64(domain))),
        }
    }

    /// Convenience generator for single-threaded use.
    pub fn rng(&self) -> ChaCha8Rng {
        self.substream(0, 0)
    }
}
