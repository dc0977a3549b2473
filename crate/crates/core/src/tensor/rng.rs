use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Logical owner of a random stream. Each (seed, round, role, index) tuple
/// maps to its own ChaCha stream so results do not depend on the order in
/// which clients are simulated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum StreamRole {
    Problem = 1,
    Init = 2,
    Sampling = 3,
    ClientGrad = 4,
    ClientCompress = 6,
    ServerCompress = 7,
    TheorySampling = 8,
    TheoryGrad = 9,
    TheoryCompress = 10,
    Partition = 11,
    Test = 255,
}

/// Deterministic random stream identified by `(seed, stream_id)`.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        SeededRng { seed, stream_id, inner }
    }

    /// Stream for `role` acting on behalf of `index` (client, task, ...) in `round`.
    /// Indices must stay below 2^24.
    pub fn for_role(seed: u64, round: u64, role: StreamRole, index: u64) -> Self {
        debug_assert!(index < (1 << 24));
        let stream = (round << 32) | ((role as u64) << 24) | (index & 0xff_ffff);
        SeededRng::new(seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
