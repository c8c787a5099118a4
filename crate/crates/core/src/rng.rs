//! Seedable, splittable random streams.
//!
//! Every random quantity is drawn from a ChaCha20 stream keyed by
//! `(master_seed, domain)` and selected by a stream index (the realization
//! number). Output therefore depends only on the seed and the realization
//! index, never on how work is split across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Independent purposes that must never share random numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Amplitude = 1,
    Phase = 2,
    Slope = 3,
    Fixture = 4,
    Test = 5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamSeed {
    master: u64,
    domain: u64,
}

impl StreamSeed {
    pub fn new(master: u64, domain: Domain) -> Self {
        StreamSeed { master, domain: domain as u64 }
    }

    /// Reuses the master seed for another purpose.
    pub fn with_domain(self, domain: Domain) -> Self {
        StreamSeed { domain: domain as u64, ..self }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Generator for substream `index`.
    pub fn stream(&self, index: u64) -> ChaCha20Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master.to_le_bytes());
        key[8..16].copy_from_slice(&self.domain.to_le_bytes());
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(index);
        rng
    }
}
