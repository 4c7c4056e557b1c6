//! Seeded, stream-partitioned random source.
//!
//! Every consumer that may run in parallel (one per node, one per SIR run)
//! owns its own stream, so results never depend on scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream domains. Mixed into the seed so that, e.g., node 7's lambda stream
/// and node 7's activity stream never coincide.
pub mod domain {
    pub const LAMBDA: u64 = 0x4c41_4d42;
    pub const HOST: u64 = 0x484f_5354;
    pub const BADN: u64 = 0x4241_444e;
    pub const SIR: u64 = 0x5349_5221;
    pub const DENSIFY: u64 = 0x4445_4e53;
}

#[derive(Clone, Debug)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RandomSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// A stream inside a named domain (see [`domain`]).
    pub fn for_domain(seed: u64, domain: u64, stream: u64) -> Self {
        Self::new(splitmix64(seed ^ splitmix64(domain)), stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
