//! Counter-based random streams.
//!
//! Each draw sequence is addressed by `(master seed, stream, counter)`; the
//! counter is normally the slot index. A generator is rebuilt from that
//! address on demand, so the values a slot sees never depend on how many
//! draws other slots or other streams consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Named substreams. The discriminant is part of the key derivation and must
/// never be renumbered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StreamId {
    AliceBits = 1,
    AliceBasis = 2,
    EveBasis = 3,
    EveMeasure = 4,
    BobBasis = 5,
    BobVoa = 6,
    DetectorNoise = 7,
    Characterize = 8,
}

impl StreamId {
    pub const ALL: [StreamId; 8] = [
        StreamId::AliceBits,
        StreamId::AliceBasis,
        StreamId::EveBasis,
        StreamId::EveMeasure,
        StreamId::BobBasis,
        StreamId::BobVoa,
        StreamId::DetectorNoise,
        StreamId::Characterize,
    ];

    pub fn label(self) -> &'static str {
        match self {
            StreamId::AliceBits => "alice-bits",
            StreamId::AliceBasis => "alice-basis",
            StreamId::EveBasis => "eve-basis",
            StreamId::EveMeasure => "eve-measure",
            StreamId::BobBasis => "bob-basis",
            StreamId::BobVoa => "bob-voa",
            StreamId::DetectorNoise => "detector-noise",
            StreamId::Characterize => "characterize",
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A keyed family of generators for one `(seed, stream)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    stream: StreamId,
    key: [u8; 32],
}

impl RngStream {
    pub fn new(seed: u64, stream: StreamId) -> Self {
        let mut state = seed ^ (stream as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        RngStream { seed, stream, key }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> StreamId {
        self.stream
    }

    /// Generator for one counter value (usually a slot index).
    pub fn at(&self, counter: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(counter);
        rng
    }
}

/// All per-run streams derived from the master seed.
#[derive(Debug, Clone, Copy)]
pub struct StreamSet {
    pub alice_bits: RngStream,
    pub alice_basis: RngStream,
    pub eve_basis: RngStream,
    pub eve_measure: RngStream,
    pub bob_basis: RngStream,
    pub bob_voa: RngStream,
    pub detector_noise: RngStream,
}

impl StreamSet {
    pub fn new(seed: u64) -> Self {
        StreamSet {
            alice_bits: RngStream::new(seed, StreamId::AliceBits),
            alice_basis: RngStream::new(seed, StreamId::AliceBasis),
            eve_basis: RngStream::new(seed, StreamId::EveBasis),
            eve_measure: RngStream::new(seed, StreamId::EveMeasure),
            bob_basis: RngStream::new(seed, StreamId::BobBasis),
            bob_voa: RngStream::new(seed, StreamId::BobVoa),
            detector_noise: RngStream::new(seed, StreamId::DetectorNoise),
        }
    }
}
