//! Attacks on the quantum links and scripted behaviour for corrupted players.

mod offset;

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::channel::{PlayerId, Stage, Transcript};
use crate::quantum::{Gate, MeasurementBasis, QuantumError, QuantumRegister};
use crate::rng::SimRng;

pub use offset::{apply_offset, qkd_prime_view, QkdPrimeOffset, QkdPrimeView};

/// Basis choice of an intercept-resend eavesdropper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterceptPolicy {
    Hadamard,
    Circular,
    Uniform,
    /// Knows the XOR of the basis bits of every player up to the link, which
    /// is the basis the travelling qubit is an eigenstate of.
    Oracle,
}

/// Quantum-layer attack on one link. Link `j` carries the qubit from player
/// `j` to player `j + 1`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LinkAttack {
    #[default]
    None,
    PhaseFlip {
        link: usize,
        mu: f64,
    },
    InterceptResend {
        link: usize,
        policy: InterceptPolicy,
    },
    /// Rows of a 2×2 unitary as `[re, im]` pairs.
    CustomUnitary {
        link: usize,
        matrix: [[[f64; 2]; 2]; 2],
    },
}

impl LinkAttack {
    pub fn link(&self) -> Option<usize> {
        match *self {
            LinkAttack::None => None,
            LinkAttack::PhaseFlip { link, .. }
            | LinkAttack::InterceptResend { link, .. }
            | LinkAttack::CustomUnitary { link, .. } => Some(link),
        }
    }

    fn gate(matrix: &[[[f64; 2]; 2]; 2]) -> Gate {
        let c = |e: [f64; 2]| Complex64::new(e[0], e[1]);
        [
            [c(matrix[0][0]), c(matrix[0][1])],
            [c(matrix[1][0]), c(matrix[1][1])],
        ]
    }
}

/// What an intercept-resend eavesdropper saw in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EavesdropEvent {
    pub round: usize,
    pub basis: MeasurementBasis,
    pub outcome: bool,
}

/// Applies the configured attack to the qubit `target` in flight on `link`.
/// `prior_basis` is the XOR of the basis bits of players `1..=link`.
pub fn apply_link_attack(
    attack: &LinkAttack,
    link: usize,
    round: usize,
    reg: &mut QuantumRegister,
    target: usize,
    prior_basis: bool,
    rng: &mut SimRng,
) -> Result<Option<EavesdropEvent>, QuantumError> {
    if attack.link() != Some(link) {
        return Ok(None);
    }
    match attack {
        LinkAttack::None => Ok(None),
        LinkAttack::PhaseFlip { mu, .. } => {
            reg.apply_phase_flip_noise(target, *mu, rng)?;
            Ok(None)
        }
        LinkAttack::InterceptResend { policy, .. } => {
            let basis = match policy {
                InterceptPolicy::Hadamard => MeasurementBasis::Hadamard,
                InterceptPolicy::Circular => MeasurementBasis::Circular,
                InterceptPolicy::Uniform => MeasurementBasis::from_bit(rng.gen()),
                InterceptPolicy::Oracle => MeasurementBasis::from_bit(prior_basis),
            };
            // the collapsed register is exactly the resent eigenstate
            let outcome = reg.measure(target, basis, rng)?;
            Ok(Some(EavesdropEvent { round, basis, outcome }))
        }
        LinkAttack::CustomUnitary { matrix, .. } => {
            reg.apply_gate(target, &LinkAttack::gate(matrix))?;
            Ok(None)
        }
    }
}

/// Classical behaviour of a corrupted player. Each hook sees only the
/// player's own data and the public transcript at the time of the call.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DishonestPolicy {
    /// Behaves exactly like an honest player.
    #[default]
    Honest,
    /// Commits to the complement of its true values.
    FlipValues,
    /// Commits to fresh uniformly random values.
    RandomValues,
    /// Commits to fresh uniformly random bases.
    RandomBases,
    /// Announces its syndrome with one bit flipped.
    FlipSyndromeBit { index: usize },
    /// Announces a correctness hash with every bit flipped.
    FlipCheckHash,
}

/// Inputs visible to a corrupted player when it must speak.
#[derive(Debug, Clone, Copy)]
pub struct View<'a> {
    pub player: PlayerId,
    pub stage: Stage,
    pub own_bases: &'a Bits,
    pub own_values: &'a Bits,
    pub transcript: &'a Transcript,
}

impl DishonestPolicy {
    pub fn bases(&self, view: &View<'_>, rng: &mut SimRng) -> Bits {
        match self {
            DishonestPolicy::RandomBases => Bits::random(view.own_bases.len(), rng),
            _ => view.own_bases.clone(),
        }
    }

    pub fn values(&self, view: &View<'_>, rng: &mut SimRng) -> Bits {
        match self {
            DishonestPolicy::FlipValues => view.own_values.iter().map(|b| !b).collect(),
            DishonestPolicy::RandomValues => Bits::random(view.own_values.len(), rng),
            _ => view.own_values.clone(),
        }
    }

    pub fn syndrome(&self, honest: Bits, _view: &View<'_>) -> Bits {
        match *self {
            DishonestPolicy::FlipSyndromeBit { index } if index < honest.len() => {
                let mut s = honest;
                s.flip(index);
                s
            }
            _ => honest,
        }
    }

    pub fn check_hash(&self, honest: Bits, _view: &View<'_>) -> Bits {
        match self {
            DishonestPolicy::FlipCheckHash => honest.iter().map(|b| !b).collect(),
            _ => honest,
        }
    }
}

/// Full adversary configuration of a session.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSpec {
    pub link: LinkAttack,
    #[serde(with = "player_keys")]
    pub dishonest: BTreeMap<PlayerId, DishonestPolicy>,
    /// Block the channel at the first broadcast of this stage.
    pub block_at: Option<Stage>,
    /// Make every coin flip abort.
    pub coin_abort: bool,
}

/// TOML tables only have string keys, so player ids go through strings.
mod player_keys {
    use super::*;
    use serde::de::Error;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<PlayerId, DishonestPolicy>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_map(map.iter().map(|(j, p)| (j.to_string(), p)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<PlayerId, DishonestPolicy>, D::Error> {
        BTreeMap::<String, DishonestPolicy>::deserialize(d)?
            .into_iter()
            .map(|(k, p)| {
                k.parse::<PlayerId>()
                    .map(|j| (j, p))
                    .map_err(|_| D::Error::custom(format!("player id `{k}` is not a number")))
            })
            .collect()
    }
}

impl AttackSpec {
    pub fn none() -> Self {
        AttackSpec::default()
    }

    pub fn honest_players(&self, players: usize) -> Vec<PlayerId> {
        (1..=players).filter(|j| !self.dishonest.contains_key(j)).collect()
    }

    pub fn policy(&self, player: PlayerId) -> Option<&DishonestPolicy> {
        self.dishonest.get(&player)
    }

    pub fn validate(&self, players: usize) -> Result<(), String> {
        if let Some(link) = self.link.link() {
            if !(1..players).contains(&link) {
                return Err(format!("attacked link {link} is not an edge of a {players}-player line"));
            }
        }
        match &self.link {
            LinkAttack::PhaseFlip { mu, .. } if !(0.0..=1.0).contains(mu) => {
                return Err(format!("attack flip probability {mu} is not a probability"));
            }
            LinkAttack::CustomUnitary { matrix, .. } => {
                let g = LinkAttack::gate(matrix);
                for r in 0..2 {
                    for c in 0..2 {
                        let dot: Complex64 = (0..2).map(|k| g[k][r].conj() * g[k][c]).sum();
                        let want = if r == c { 1.0 } else { 0.0 };
                        if (dot - want).norm() > 1e-9 {
                            return Err("custom attack matrix is not unitary".into());
                        }
                    }
                }
            }
            _ => {}
        }
        if let Some(&j) = self.dishonest.keys().find(|&&j| !(1..=players).contains(&j)) {
            return Err(format!("dishonest player {j} outside 1..={players}"));
        }
        if self.honest_players(players).len() < 2 {
            return Err("at least two players must be honest".into());
        }
        Ok(())
    }
}
