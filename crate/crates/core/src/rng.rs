//! Keyed random streams.
//!
//! Every random draw in a simulation comes from a stream identified by
//! `(seed, purpose, round, device)`. Streams are independent ChaCha8
//! generators, so adding a device or reordering a device loop never shifts
//! the draws seen by any other device.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    DownlinkFading = 1,
    DownlinkNoise = 2,
    UplinkFading = 3,
    UplinkNoise = 4,
    Quantization = 5,
    MiniBatch = 6,
    Partition = 7,
    Dataset = 8,
    Init = 9,
    Test = 255,
}

/// Identifies one stream under a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub purpose: Purpose,
    pub round: u64,
    pub device: u64,
}

impl StreamKey {
    pub fn new(purpose: Purpose, round: u64, device: u64) -> Self {
        Self { purpose, round, device }
    }
}

/// A deterministic generator for one `(seed, stream)` pair.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeededRng {
    pub fn new(seed: u64, key: StreamKey) -> Self {
        let mut state = seed;
        for word in [key.purpose as u64, key.round, key.device] {
            let mut mixed = state ^ word.wrapping_mul(0xD6E8_FEB8_6659_FD93);
            state = splitmix64(&mut mixed);
        }
        let mut bytes = [0u8; 32];
        for chunk in bytes.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self {
            inner: ChaCha8Rng::from_seed(bytes),
        }
    }

    /// Shorthand for `SeededRng::new(seed, StreamKey::new(purpose, round, device))`.
    pub fn stream(seed: u64, purpose: Purpose, round: u64, device: u64) -> Self {
        Self::new(seed, StreamKey::new(purpose, round, device))
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
