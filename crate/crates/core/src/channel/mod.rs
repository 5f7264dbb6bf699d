//! The classical resource shared by all players: an authenticated broadcast
//! channel with a random subset broadcast subroutine, distributed coin
//! flipping, and a blocking lever held by the adversary.
//!
//! Everything here is an ideal functionality. [`commit_reveal`] holds a
//! hash-commitment realization of the subset broadcast that can be swapped
//! in where the ideal session is used.

pub mod commit_reveal;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;
use crate::rng::SimRng;

/// Players are numbered `1..=J` along the line.
pub type PlayerId = usize;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ChannelError {
    #[error("channel blocked")]
    Blocked,
    #[error("coin flip aborted")]
    CoinFlipAborted,
    #[error("player {0} is not a participant of this session")]
    UnknownPlayer(PlayerId),
    #[error("player {0} already committed")]
    DoubleCommit(PlayerId),
    #[error("committed list has {got} entries, index set has {expected}")]
    WrongIndexSet { expected: usize, got: usize },
    #[error("missing commitments from players {0:?}")]
    MissingCommitments(Vec<PlayerId>),
    #[error("session already revealed")]
    AlreadyRevealed,
    #[error("subset size {subset} exceeds index set size {indices}")]
    SubsetTooLarge { subset: usize, indices: usize },
    #[error("commitment opening of player {player} at index {index} does not match")]
    OpeningMismatch { player: PlayerId, index: usize },
    #[error("coin flip over an empty domain")]
    EmptyDomain,
}

/// Label attached to each broadcast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Announce,
    Basis,
    CheckSubset,
    CheckValues,
    Syndrome,
    CorrectnessSeed,
    CorrectnessHash,
    AmplificationSeed,
    Coin,
    Ciphertext,
    Veto,
    KeyReveal,
}

impl Stage {
    pub const ALL: [Stage; 12] = [
        Stage::Announce,
        Stage::Basis,
        Stage::CheckSubset,
        Stage::CheckValues,
        Stage::Syndrome,
        Stage::CorrectnessSeed,
        Stage::CorrectnessHash,
        Stage::AmplificationSeed,
        Stage::Coin,
        Stage::Ciphertext,
        Stage::Veto,
        Stage::KeyReveal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Announce => "announce",
            Stage::Basis => "basis",
            Stage::CheckSubset => "check-subset",
            Stage::CheckValues => "check-values",
            Stage::Syndrome => "syndrome",
            Stage::CorrectnessSeed => "correctness-seed",
            Stage::CorrectnessHash => "correctness-hash",
            Stage::AmplificationSeed => "amplification-seed",
            Stage::Coin => "coin",
            Stage::Ciphertext => "ciphertext",
            Stage::Veto => "veto",
            Stage::KeyReveal => "key-reveal",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .iter()
            .copied()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

/// Who put an entry on the transcript. Outputs of the channel's own
/// subroutines (sampled subsets, coin flips) carry `Functionality`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sender {
    Functionality,
    Player(PlayerId),
}

impl fmt::Display for Sender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sender::Functionality => f.write_str("0"),
            Sender::Player(j) => write!(f, "{j}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub sender: Sender,
    pub stage: Stage,
    pub payload: Bits,
}

/// Append-only broadcast log.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
    blocked: bool,
}

impl Transcript {
    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn is_blocked(&self) -> bool {
        self.blocked
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn by_stage(&self, stage: Stage) -> impl Iterator<Item = &TranscriptEntry> {
        self.entries.iter().filter(move |e| e.stage == stage)
    }

    fn append(&mut self, entry: TranscriptEntry) -> Result<(), ChannelError> {
        if self.blocked {
            return Err(ChannelError::Blocked);
        }
        self.entries.push(entry);
        Ok(())
    }

    /// One line per entry: `<sender>\t<stage>\t<len>:<hex>`; sender `0` is
    /// the functionality itself.
    pub fn write_lines<W: Write>(&self, mut out: W) -> io::Result<()> {
        for e in &self.entries {
            writeln!(out, "{}\t{}\t{}", e.sender, e.stage, e.payload.to_hex())?;
        }
        if self.blocked {
            writeln!(out, "#blocked")?;
        }
        Ok(())
    }

    pub fn to_lines(&self) -> String {
        let mut buf = Vec::new();
        self.write_lines(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("transcript lines are ASCII")
    }

    pub fn read_lines<R: BufRead>(input: R) -> Result<Transcript, String> {
        let mut t = Transcript::default();
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            if line.is_empty() {
                continue;
            }
            if line == "#blocked" {
                t.blocked = true;
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(sender), Some(stage), Some(payload), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(format!("line {}: expected three tab-separated fields", n + 1));
            };
            let sender = match sender.parse::<usize>() {
                Ok(0) => Sender::Functionality,
                Ok(j) => Sender::Player(j),
                Err(_) => return Err(format!("line {}: bad sender `{sender}`", n + 1)),
            };
            let stage = stage.parse().map_err(|e| format!("line {}: {e}", n + 1))?;
            let payload = Bits::from_hex(payload).map_err(|e| format!("line {}: {e}", n + 1))?;
            t.entries.push(TranscriptEntry { sender, stage, payload });
        }
        Ok(t)
    }
}

/// Values revealed by the second stage of a subset broadcast.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetReveal {
    /// Sorted sampled indices into the committed lists.
    pub subset: Vec<usize>,
    /// Each participant's values restricted to `subset`, in subset order.
    pub values: BTreeMap<PlayerId, Bits>,
}

/// Common surface of the ideal subset broadcast and its commit-reveal
/// realization.
pub trait SubsetBroadcast {
    fn commit(&mut self, player: PlayerId, values: Bits) -> Result<(), ChannelError>;
    fn reveal(&mut self, rng: &mut SimRng) -> Result<SubsetReveal, ChannelError>;
}

/// Samples `size` distinct indices of `0..domain`, sorted.
pub fn sample_subset(rng: &mut SimRng, domain: usize, size: usize) -> Vec<usize> {
    let mut subset = index::sample(rng, domain, size).into_vec();
    subset.sort_unstable();
    subset
}

/// Ideal two-stage random subset broadcast.
#[derive(Debug, Clone)]
pub struct SubsetBroadcastSession {
    index_count: usize,
    subset_size: usize,
    participants: Vec<PlayerId>,
    committed: BTreeMap<PlayerId, Bits>,
    revealed: Option<Vec<usize>>,
}

impl SubsetBroadcastSession {
    pub fn new(
        participants: Vec<PlayerId>,
        index_count: usize,
        subset_size: usize,
    ) -> Result<Self, ChannelError> {
        if subset_size > index_count {
            return Err(ChannelError::SubsetTooLarge {
                subset: subset_size,
                indices: index_count,
            });
        }
        Ok(SubsetBroadcastSession {
            index_count,
            subset_size,
            participants,
            committed: BTreeMap::new(),
            revealed: None,
        })
    }

    pub fn subset_size(&self) -> usize {
        self.subset_size
    }

    pub fn index_count(&self) -> usize {
        self.index_count
    }

    pub fn revealed_subset(&self) -> Option<&[usize]> {
        self.revealed.as_deref()
    }

    pub fn has_committed(&self, player: PlayerId) -> bool {
        self.committed.contains_key(&player)
    }

    fn missing(&self) -> Vec<PlayerId> {
        self.participants
            .iter()
            .copied()
            .filter(|p| !self.committed.contains_key(p))
            .collect()
    }
}

impl SubsetBroadcast for SubsetBroadcastSession {
    fn commit(&mut self, player: PlayerId, values: Bits) -> Result<(), ChannelError> {
        if self.revealed.is_some() {
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
        self.committed.insert(player, values);
        Ok(())
    }

    fn reveal(&mut self, rng: &mut SimRng) -> Result<SubsetReveal, ChannelError> {
        if self.revealed.is_some() {
            return Err(ChannelError::AlreadyRevealed);
        }
        let missing = self.missing();
        if !missing.is_empty() {
            return Err(ChannelError::MissingCommitments(missing));
        }
        let subset = sample_subset(rng, self.index_count, self.subset_size);
        let values = self
            .committed
            .iter()
            .map(|(&p, v)| (p, v.select(&subset)))
            .collect();
        self.revealed = Some(subset.clone());
        Ok(SubsetReveal { subset, values })
    }
}

/// Channel state for one protocol session.
#[derive(Debug, Clone)]
pub struct Channel {
    num_players: usize,
    transcript: Transcript,
    rng: SimRng,
    block_at: Option<Stage>,
    coin_abort: bool,
}

impl Channel {
    pub fn new(num_players: usize, rng: SimRng) -> Self {
        Channel {
            num_players,
            transcript: Transcript::default(),
            rng,
            block_at: None,
            coin_abort: false,
        }
    }

    /// Arms the blocking lever: the first broadcast tagged `stage` blocks
    /// the channel for good.
    pub fn block_at(&mut self, stage: Option<Stage>) {
        self.block_at = stage;
    }

    /// Pulls the blocking lever now.
    pub fn block(&mut self) {
        self.transcript.blocked = true;
    }

    pub fn set_coin_abort(&mut self, abort: bool) {
        self.coin_abort = abort;
    }

    pub fn num_players(&self) -> usize {
        self.num_players
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }

    pub fn is_blocked(&self) -> bool {
        self.transcript.blocked
    }

    fn post(&mut self, sender: Sender, stage: Stage, payload: Bits) -> Result<(), ChannelError> {
        if self.block_at == Some(stage) {
            self.transcript.blocked = true;
        }
        self.transcript.append(TranscriptEntry { sender, stage, payload })
    }

    pub fn broadcast(&mut self, sender: PlayerId, stage: Stage, payload: Bits) -> Result<(), ChannelError> {
        assert!(
            (1..=self.num_players).contains(&sender),
            "sender {sender} outside 1..={}",
            self.num_players
        );
        self.post(Sender::Player(sender), stage, payload)
    }

    /// Opens a subset broadcast over all players.
    pub fn subset_session(&self, index_count: usize, subset_size: usize) -> Result<SubsetBroadcastSession, ChannelError> {
        SubsetBroadcastSession::new((1..=self.num_players).collect(), index_count, subset_size)
    }

    /// Runs stage two of `session` and posts the outcome. The subset is
    /// posted as an indicator string over the index set; each player's
    /// revealed values follow under `stage`.
    pub fn reveal_subset<S: SubsetBroadcast>(
        &mut self,
        session: &mut S,
        index_count: usize,
        stage: Stage,
        post_subset: bool,
    ) -> Result<SubsetReveal, ChannelError> {
        if self.is_blocked() {
            return Err(ChannelError::Blocked);
        }
        let reveal = session.reveal(&mut self.rng)?;
        if post_subset {
            let mut indicator = Bits::zeros(index_count);
            for &i in &reveal.subset {
                indicator.set(i, true);
            }
            self.post(Sender::Functionality, Stage::CheckSubset, indicator)?;
        }
        for (&player, values) in &reveal.values {
            self.post(Sender::Player(player), stage, values.clone())?;
        }
        Ok(reveal)
    }

    /// Uniform bit string agreed by all players.
    pub fn coin_flip_bits(&mut self, len: usize, stage: Stage) -> Result<Bits, ChannelError> {
        if self.coin_abort {
            return Err(ChannelError::CoinFlipAborted);
        }
        if self.is_blocked() {
            return Err(ChannelError::Blocked);
        }
        let bits = Bits::random(len, &mut self.rng);
        self.post(Sender::Functionality, stage, bits.clone())?;
        Ok(bits)
    }

    /// Uniform element of `0..domain`.
    pub fn coin_flip_range(&mut self, domain: u64) -> Result<u64, ChannelError> {
        if domain == 0 {
            return Err(ChannelError::EmptyDomain);
        }
        if self.coin_abort {
            return Err(ChannelError::CoinFlipAborted);
        }
        let value = self.rng.gen_range(0..domain);
        let payload = Bits::from_iter((0..64).map(|i| (value >> i) & 1 == 1));
        self.post(Sender::Functionality, Stage::Coin, payload)?;
        Ok(value)
    }
}
