//! Primitives built on shares of zero and the broadcast channel: one-time-pad
//! secret sharing, an anonymous veto and pairwise key establishment.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;
use crate::channel::{Channel, ChannelError, PlayerId, Stage};
use crate::protocol::SessionOutcome;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AppError {
    #[error("session {0} aborted and produced no shares")]
    Aborted(u64),
    #[error("share of player {0} is missing")]
    MissingShare(PlayerId),
    #[error("player {0} is not part of the share set")]
    UnknownPlayer(PlayerId),
    #[error("length mismatch: expected {expected} bits, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("need {needed} share sets, got {got}")]
    InsufficientSessions { needed: usize, got: usize },
    #[error("share sets disagree on the player count")]
    PlayerCountMismatch,
    #[error("key establishment needs two distinct players")]
    SamePlayer,
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Shares from one successful session. Players whose share is withheld are
/// simply absent from the map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareSet {
    pub session_id: u64,
    pub players: usize,
    pub key_len: usize,
    pub shares: BTreeMap<PlayerId, Bits>,
}

impl ShareSet {
    pub fn new(session_id: u64, players: usize, shares: BTreeMap<PlayerId, Bits>) -> Result<Self, AppError> {
        let key_len = shares.values().next().map_or(0, Bits::len);
        for (&j, s) in &shares {
            if !(1..=players).contains(&j) {
                return Err(AppError::UnknownPlayer(j));
            }
            if s.len() != key_len {
                return Err(AppError::LengthMismatch { expected: key_len, got: s.len() });
            }
        }
        Ok(ShareSet { session_id, players, key_len, shares })
    }

    pub fn from_outcome(session_id: u64, outcome: &SessionOutcome) -> Result<Self, AppError> {
        let shares = outcome.shares.clone().ok_or(AppError::Aborted(session_id))?;
        let players = shares.keys().copied().max().unwrap_or(0);
        Self::new(session_id, players, shares)
    }

    pub fn share(&self, j: PlayerId) -> Result<&Bits, AppError> {
        if !(1..=self.players).contains(&j) {
            return Err(AppError::UnknownPlayer(j));
        }
        self.shares.get(&j).ok_or(AppError::MissingShare(j))
    }

    /// Whether all shares are present and XOR to zero.
    pub fn is_consistent(&self) -> bool {
        self.shares.len() == self.players
            && self
                .shares
                .values()
                .fold(Bits::zeros(self.key_len), |acc, s| &acc ^ s)
                .is_zero()
    }

    /// Drops a player's share, as if it never revealed it.
    pub fn without(&self, j: PlayerId) -> Self {
        let mut out = self.clone();
        out.shares.remove(&j);
        out
    }
}

/// The dealer broadcasts its secret padded with its own share.
pub fn share_message(
    dealer: PlayerId,
    secret: &Bits,
    set: &ShareSet,
    channel: &mut Channel,
) -> Result<Bits, AppError> {
    let share = set.share(dealer)?;
    if secret.len() != share.len() {
        return Err(AppError::LengthMismatch { expected: share.len(), got: secret.len() });
    }
    let ciphertext = secret ^ share;
    channel.broadcast(dealer, Stage::Ciphertext, ciphertext.clone())?;
    Ok(ciphertext)
}

/// XORs the ciphertext with the shares of everybody except the dealer.
pub fn reconstruct(dealer: PlayerId, ciphertext: &Bits, set: &ShareSet) -> Result<Bits, AppError> {
    if ciphertext.len() != set.key_len {
        return Err(AppError::LengthMismatch { expected: set.key_len, got: ciphertext.len() });
    }
    let mut out = ciphertext.clone();
    for j in (1..=set.players).filter(|&j| j != dealer) {
        out ^= set.share(j)?;
    }
    Ok(out)
}

/// Announcement order of veto round `r`: player `r + 1` speaks last.
pub fn veto_order(players: usize, round: usize) -> Vec<PlayerId> {
    (1..=players).map(|i| (round + i) % players + 1).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VetoOutcome {
    pub veto: bool,
    /// Whether the announcements of each round XOR to a nonzero string.
    pub rounds: Vec<bool>,
}

/// One round per player, each on its own share set. In every round a player
/// announces its share, or a fresh random string if it vetoes; the result is
/// a veto iff some round's announcements do not XOR to zero.
pub fn anonymous_veto<R: Rng + ?Sized>(
    sets: &[ShareSet],
    vetoes: &[bool],
    channel: &mut Channel,
    rng: &mut R,
) -> Result<VetoOutcome, AppError> {
    let players = vetoes.len();
    if sets.len() < players {
        return Err(AppError::InsufficientSessions { needed: players, got: sets.len() });
    }
    if sets.iter().any(|s| s.players != players) {
        return Err(AppError::PlayerCountMismatch);
    }
    let mut rounds = Vec::with_capacity(players);
    for (r, set) in sets.iter().take(players).enumerate() {
        let mut acc = Bits::zeros(set.key_len);
        for j in veto_order(players, r) {
            let share = set.share(j)?;
            let word = if vetoes[j - 1] {
                Bits::random(share.len(), rng)
            } else {
                share.clone()
            };
            channel.broadcast(j, Stage::Veto, word.clone())?;
            acc ^= &word;
        }
        rounds.push(!acc.is_zero());
    }
    Ok(VetoOutcome { veto: rounds.iter().any(|&r| r), rounds })
}

/// Everybody except `a` and `b` reveals its share. `a` folds the revealed
/// shares into its own; `b` keeps its share as is. Returns `(key_a, key_b)`.
pub fn establish_key(
    set: &ShareSet,
    a: PlayerId,
    b: PlayerId,
    channel: &mut Channel,
) -> Result<(Bits, Bits), AppError> {
    if a == b {
        return Err(AppError::SamePlayer);
    }
    let mut key_a = set.share(a)?.clone();
    let key_b = set.share(b)?.clone();
    for j in (1..=set.players).filter(|&j| j != a && j != b) {
        let s = set.share(j)?;
        channel.broadcast(j, Stage::KeyReveal, s.clone())?;
        key_a ^= s;
    }
    Ok((key_a, key_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn zero_shares(players: usize, k: usize, seed: u64) -> ShareSet {
        let mut rng = stream(seed, Stream::Application);
        let mut shares: BTreeMap<PlayerId, Bits> = (1..players).map(|j| (j, Bits::random(k, &mut rng))).collect();
        let last = shares.values().fold(Bits::zeros(k), |acc, s| &acc ^ s);
        shares.insert(players, last);
        ShareSet::new(seed, players, shares).unwrap()
    }

    fn channel(players: usize) -> Channel {
        Channel::new(players, stream(0, Stream::Channel))
    }

    #[test]
    fn zero_secret_publishes_dealer_share() {
        let set = zero_shares(3, 16, 1);
        let mut ch = channel(3);
        let c = share_message(2, &Bits::zeros(16), &set, &mut ch).unwrap();
        assert_eq!(&c, set.share(2).unwrap());
        assert!(reconstruct(2, &c, &set).unwrap().is_zero());
        assert_eq!(ch.transcript().by_stage(Stage::Ciphertext).count(), 1);
    }

    #[test]
    fn reconstruction_needs_every_other_share() {
        let set = zero_shares(4, 8, 2);
        let c = share_message(1, &Bits::zeros(8), &set, &mut channel(4)).unwrap();
        assert_eq!(reconstruct(1, &c, &set.without(3)), Err(AppError::MissingShare(3)));
        assert!(reconstruct(3, &c, &set.without(3)).is_ok());
    }

    #[test]
    fn veto_orders_rotate() {
        assert_eq!(veto_order(4, 0), vec![2, 3, 4, 1]);
        assert_eq!(veto_order(4, 3), vec![1, 2, 3, 4]);
        for r in 0..5 {
            assert_eq!(*veto_order(5, r).last().unwrap(), r + 1);
        }
    }

    #[test]
    fn veto_needs_one_set_per_player() {
        let sets = vec![zero_shares(3, 8, 1), zero_shares(3, 8, 2)];
        let mut rng = stream(0, Stream::Application);
        let err = anonymous_veto(&sets, &[false; 3], &mut channel(3), &mut rng).unwrap_err();
        assert_eq!(err, AppError::InsufficientSessions { needed: 3, got: 2 });
    }

    #[test]
    fn two_player_keys_are_raw_shares() {
        let set = zero_shares(2, 32, 3);
        let mut ch = channel(2);
        let (ka, kb) = establish_key(&set, 1, 2, &mut ch).unwrap();
        assert_eq!(&ka, set.share(1).unwrap());
        assert_eq!(ka, kb);
        assert!(ch.transcript().is_empty());
        assert_eq!(establish_key(&set, 1, 1, &mut ch), Err(AppError::SamePlayer));
    }

    #[test]
    fn withheld_reveal_gives_no_key() {
        let set = zero_shares(4, 32, 4).without(2);
        assert_eq!(establish_key(&set, 1, 4, &mut channel(4)), Err(AppError::MissingShare(2)));
    }
}
