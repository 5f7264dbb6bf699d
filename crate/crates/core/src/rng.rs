//! Seed handling. Every random choice in a session comes from a ChaCha20
//! stream keyed by the session seed; each role draws from its own stream so
//! that changing one party's behaviour never shifts another party's coins.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub type SimRng = ChaCha20Rng;

/// Independent stream identifiers under one session seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Noise and Born-rule sampling on the quantum layer.
    Quantum,
    /// Subset sampling and coin flips of the classical channel.
    Channel,
    /// Eavesdropper and dishonest-player randomness.
    Adversary,
    /// Commitment randomness for the commit-reveal channel.
    Commitments,
    /// Application-layer randomness (veto strings, test secrets).
    Application,
    /// Local randomness of player `j`.
    Player(usize),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Quantum => 1,
            Stream::Channel => 2,
            Stream::Adversary => 3,
            Stream::Commitments => 4,
            Stream::Application => 5,
            Stream::Player(j) => 1000 + j as u64,
        }
    }
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}

const RUN_SEED_STREAM: u64 = 0x5eed;

/// Seed of run `index` under `master`: block `index` of a dedicated
/// keystream, so any run can be regenerated without replaying the others.
pub fn derive_run_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    rng.set_stream(RUN_SEED_STREAM);
    // 16 words per ChaCha block
    rng.set_word_pos(u128::from(index) * 16);
    rng.next_u64()
}
