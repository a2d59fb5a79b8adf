//! Independent, seeded random streams.
//!
//! Each stochastic concern draws from its own ChaCha stream derived from the
//! run seed, so changing one concern (say, the adversary roster) never shifts
//! the numbers another concern sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamId {
    Mobility,
    Link,
    Adversary,
    Traffic,
    Keys,
}

impl StreamId {
    fn tag(self) -> u64 {
        match self {
            StreamId::Mobility => 0x6d6f_6269,
            StreamId::Link => 0x6c69_6e6b,
            StreamId::Adversary => 0x6164_7672,
            StreamId::Traffic => 0x7472_6166,
            StreamId::Keys => 0x6b65_7973,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy)]
pub struct RngStreams {
    seed: u64,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        RngStreams { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, id: StreamId) -> SimRng {
        self.substream(id, 0)
    }

    /// A stream for one member of a concern, e.g. one node's mobility.
    pub fn substream(&self, id: StreamId, sub: u64) -> SimRng {
        let k = splitmix64(splitmix64(self.seed ^ id.tag()).wrapping_add(sub));
        ChaCha8Rng::seed_from_u64(k)
    }
}
