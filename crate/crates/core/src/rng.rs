//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 generator keyed by `(master seed, purpose,
//! index, attempt)`. Streams never depend on execution order, so parallel
//! replicates reproduce bit-for-bit regardless of scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share key material.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Data = 1,
    Sampling = 2,
    Studentizer = 3,
    MonteCarlo = 4,
    Oracle = 5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream {
    master: u64,
}

impl SeedStream {
    pub fn new(master: u64) -> Self {
        SeedStream { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn rng(&self, purpose: Purpose, index: u64) -> ChaCha8Rng {
        self.rng_attempt(purpose, index, 0)
    }

    /// Stream for a retry of the same `(purpose, index)` draw.
    pub fn rng_attempt(&self, purpose: Purpose, index: u64, attempt: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.master.to_le_bytes());
        key[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
        key[16..24].copy_from_slice(&index.to_le_bytes());
        key[24..32].copy_from_slice(&attempt.to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }
}
