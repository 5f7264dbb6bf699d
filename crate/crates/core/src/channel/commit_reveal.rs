//! Subset broadcast realized with hash commitments: every player commits to
//! each entry of its list as `SHA-256(bit || r)` with 256-bit randomness `r`,
//! and opens only the sampled entries afterwards.

use std::collections::BTreeMap;

use rand::RngCore;
use sha2::{Digest, Sha256};

use super::{sample_subset, ChannelError, PlayerId, SubsetBroadcast, SubsetReveal};
use crate::bits::Bits;
use crate::rng::SimRng;

pub type Digest256 = [u8; 32];

/// Commitment primitive.
pub trait CommitmentScheme {
    fn commit(&self, value: bool, randomness: &[u8; 32]) -> Digest256;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sha256Commitment;

impl CommitmentScheme for Sha256Commitment {
    fn commit(&self, value: bool, randomness: &[u8; 32]) -> Digest256 {
        let mut h = Sha256::new();
        h.update([u8::from(value)]);
        h.update(randomness);
        h.finalize().into()
    }
}

/// How a player opens its commitments in stage two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OpeningBehavior {
    #[default]
    Honest,
    /// Opens the first sampled entry with corrupted randomness.
    TamperOpening,
    /// Claims a different value for the first sampled entry.
    ChangeValue,
}

struct Committed {
    digests: Vec<Digest256>,
    values: Bits,
    randomness: Vec<[u8; 32]>,
}

pub struct CommitRevealSession<C: CommitmentScheme = Sha256Commitment> {
    scheme: C,
    participants: Vec<PlayerId>,
    index_count: usize,
    subset_size: usize,
    rng: SimRng,
    committed: BTreeMap<PlayerId, Committed>,
    behavior: BTreeMap<PlayerId, OpeningBehavior>,
    revealed: bool,
}

impl CommitRevealSession<Sha256Commitment> {
    pub fn new(
        participants: Vec<PlayerId>,
        index_count: usize,
        subset_size: usize,
        commitment_rng: SimRng,
    ) -> Result<Self, ChannelError> {
        Self::with_scheme(Sha256Commitment, participants, index_count, subset_size, commitment_rng)
    }
}

impl<C: CommitmentScheme> CommitRevealSession<C> {
    pub fn with_scheme(
        scheme: C,
        participants: Vec<PlayerId>,
        index_count: usize,
        subset_size: usize,
        commitment_rng: SimRng,
    ) -> Result<Self, ChannelError> {
        if subset_size > index_count {
            return Err(ChannelError::SubsetTooLarge {
                subset: subset_size,
                indices: index_count,
            });
        }
        Ok(CommitRevealSession {
            scheme,
            participants,
            index_count,
            subset_size,
            rng: commitment_rng,
            committed: BTreeMap::new(),
            behavior: BTreeMap::new(),
            revealed: false,
        })
    }

    pub fn set_behavior(&mut self, player: PlayerId, behavior: OpeningBehavior) {
        self.behavior.insert(player, behavior);
    }

    /// Published digests of `player`, one per index.
    pub fn digests(&self, player: PlayerId) -> Option<&[Digest256]> {
        self.committed.get(&player).map(|c| c.digests.as_slice())
    }
}

impl<C: CommitmentScheme> SubsetBroadcast for CommitRevealSession<C> {
    fn commit(&mut self, player: PlayerId, values: Bits) -> Result<(), ChannelError> {
        if self.revealed {
            return Err(ChannelError::AlreadyRevealed);
        }
        if !self.participants.contains(&player) {
            return Err(ChannelError::UnknownPlayer(player));
        }
        if self.committed.contains_key(&player) {
            return Err(ChannelError::DoubleCommit(player));
        }
        if values.len() != self.index_count {
            return Err(ChannelError::WrongIndexSet {
                expected: self.index_count,
                got: values.len(),
            });
        }
        let mut randomness = Vec::with_capacity(values.len());
        let mut digests = Vec::with_capacity(values.len());
        for bit in values.iter() {
            let mut r = [0u8; 32];
            self.rng.fill_bytes(&mut r);
            digests.push(self.scheme.commit(bit, &r));
            randomness.push(r);
        }
        self.committed.insert(player, Committed { digests, values, randomness });
        Ok(())
    }

    fn reveal(&mut self, rng: &mut SimRng) -> Result<SubsetReveal, ChannelError> {
        if self.revealed {
            return Err(ChannelError::AlreadyRevealed);
        }
        let missing: Vec<_> = self
            .participants
            .iter()
            .copied()
            .filter(|p| !self.committed.contains_key(p))
            .collect();
        if !missing.is_empty() {
            return Err(ChannelError::MissingCommitments(missing));
        }
        self.revealed = true;
        let subset = sample_subset(rng, self.index_count, self.subset_size);

        let mut values = BTreeMap::new();
        for (&player, c) in &self.committed {
            let behavior = self.behavior.get(&player).copied().unwrap_or_default();
            let mut opened = Bits::zeros(subset.len());
            for (pos, &i) in subset.iter().enumerate() {
                let mut bit = c.values.get(i);
                let mut r = c.randomness[i];
                if pos == 0 {
                    match behavior {
                        OpeningBehavior::Honest => {}
                        OpeningBehavior::TamperOpening => r[0] ^= 1,
                        OpeningBehavior::ChangeValue => bit = !bit,
                    }
                }
                if self.scheme.commit(bit, &r) != c.digests[i] {
                    return Err(ChannelError::OpeningMismatch { player, index: i });
                }
                opened.set(pos, bit);
            }
            values.insert(player, opened);
        }
        Ok(SubsetReveal { subset, values })
    }
}
