//! One protocol session: state distribution followed by announcements,
//! sifting, error estimation, error correction, the correctness check and
//! privacy amplification.
//!
//! [`Session`] exposes every step so tests can drive or inspect the pipeline
//! stage by stage; [`run_session`] runs it end to end.

mod distribution;
mod params;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adversary::{AttackSpec, EavesdropEvent, View};
use crate::bits::{xor_all, Bits};
use crate::channel::{Channel, ChannelError, PlayerId, Stage, SubsetBroadcast, Transcript};
use crate::coding::{toeplitz, LinearCode, ToeplitzHash};
use crate::quantum::PhaseExponent;
use crate::rng::{stream, SimRng, Stream};
use crate::security::{solve_key_length, BoundInputs};

pub use distribution::{run_distribution, run_eb_distribution, run_pm_distribution, Distribution, Variant};
pub use params::{KeyLength, ParamError, ProtocolParams};

/// Random streams of one session, all derived from its seed.
#[derive(Debug, Clone)]
pub struct SessionRngs {
    pub quantum: SimRng,
    pub adversary: SimRng,
    players: Vec<SimRng>,
}

impl SessionRngs {
    pub fn new(seed: u64, players: usize) -> Self {
        SessionRngs {
            quantum: stream(seed, Stream::Quantum),
            adversary: stream(seed, Stream::Adversary),
            players: (1..=players).map(|j| stream(seed, Stream::Player(j))).collect(),
        }
    }

    pub fn player(&mut self, j: PlayerId) -> &mut SimRng {
        &mut self.players[j - 1]
    }
}

/// One player's local data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerRecord {
    pub id: PlayerId,
    /// Basis bit per round.
    pub b: Bits,
    /// Value bit per round.
    pub v: Bits,
    pub share: Option<Bits>,
}

impl PlayerRecord {
    pub fn new(id: PlayerId, b: Bits, v: Bits) -> Self {
        PlayerRecord { id, b, v, share: None }
    }

    /// Phase exponent `b + 2v` of round `n`.
    pub fn x(&self, n: usize) -> PhaseExponent {
        PhaseExponent::from_bits(self.b.get(n), self.v.get(n))
    }
}

/// Where a session stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AbortStage {
    Sifting,
    Estimation,
    CodeConstruction,
    CorrectnessCheck,
    KeyLength,
    /// The channel was blocked or a coin flip aborted during this stage.
    Channel(Stage),
}

impl fmt::Display for AbortStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbortStage::Sifting => f.write_str("sifting"),
            AbortStage::Estimation => f.write_str("estimation"),
            AbortStage::CodeConstruction => f.write_str("code-construction"),
            AbortStage::CorrectnessCheck => f.write_str("correctness-check"),
            AbortStage::KeyLength => f.write_str("key-length"),
            AbortStage::Channel(s) => write!(f, "channel:{s}"),
        }
    }
}

impl FromStr for AbortStage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "sifting" => AbortStage::Sifting,
            "estimation" => AbortStage::Estimation,
            "code-construction" => AbortStage::CodeConstruction,
            "correctness-check" => AbortStage::CorrectnessCheck,
            "key-length" => AbortStage::KeyLength,
            _ => match s.strip_prefix("channel:") {
                Some(stage) => AbortStage::Channel(stage.parse()?),
                None => return Err(format!("unknown abort stage `{s}`")),
            },
        })
    }
}

impl Serialize for AbortStage {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AbortStage {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Sizes and outcomes recorded along the pipeline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub n: usize,
    /// Inconclusive rounds `|U|`.
    pub u: usize,
    /// Conclusive rounds `L = N − |U|`.
    pub l: usize,
    /// Conclusive check rounds.
    pub tau: usize,
    pub q: Option<f64>,
    /// Key rounds `M = L − τ`.
    pub m: usize,
    pub chi: usize,
    pub k: usize,
    /// Key rounds whose values do not XOR to zero, before and after
    /// correction. Only a simulator can see these.
    pub residual_before: Option<usize>,
    pub residual_after: Option<usize>,
    pub decoder_failed: bool,
    pub abort: Option<AbortStage>,
    /// Whether the final shares of all players XOR to zero.
    pub xor_zero: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOutcome {
    /// Final shares of every player, absent after an abort.
    pub shares: Option<BTreeMap<PlayerId, Bits>>,
    pub honest: Vec<PlayerId>,
    pub transcript: Transcript,
    pub stats: SessionStats,
    pub eavesdropper: Vec<EavesdropEvent>,
}

impl SessionOutcome {
    pub fn aborted(&self) -> bool {
        self.stats.abort.is_some()
    }

    pub fn honest_shares(&self) -> Option<BTreeMap<PlayerId, Bits>> {
        self.shares.as_ref().map(|all| {
            all.iter()
                .filter(|(j, _)| self.honest.contains(j))
                .map(|(&j, s)| (j, s.clone()))
                .collect()
        })
    }
}

/// Passes iff the hashes of all keys XOR to zero.
pub fn correctness_passes(hash: &ToeplitzHash, keys: &[Bits]) -> Result<bool, crate::coding::CodeError> {
    let mut acc = Bits::zeros(hash.output_len());
    for k in keys {
        acc ^= &hash.eval(k)?;
    }
    Ok(acc.is_zero())
}

/// A session in progress.
pub struct Session<'a> {
    params: &'a ProtocolParams,
    attack: &'a AttackSpec,
    pub records: Vec<PlayerRecord>,
    pub channel: Channel,
    pub stats: SessionStats,
    pub eavesdropper: Vec<EavesdropEvent>,
    adversary_rng: SimRng,
    bases: BTreeMap<PlayerId, Bits>,
    check_subset: Vec<usize>,
    check_values: BTreeMap<PlayerId, Bits>,
    check_rounds: Vec<usize>,
    live: Vec<usize>,
    code: Option<LinearCode>,
}

impl<'a> Session<'a> {
    /// Validates the configuration and runs state distribution.
    pub fn new(
        params: &'a ProtocolParams,
        variant: Variant,
        attack: &'a AttackSpec,
        seed: u64,
    ) -> Result<Self, ParamError> {
        params.validate()?;
        attack.validate(params.players).map_err(ParamError)?;
        let mut rngs = SessionRngs::new(seed, params.players);
        let dist = run_distribution(variant, params, attack, &mut rngs)?;
        let mut session = Self::from_records(params, attack, dist.records, seed)?;
        session.eavesdropper = dist.eavesdropper;
        session.adversary_rng = rngs.adversary;
        Ok(session)
    }

    /// Starts post-processing from given records, bypassing the quantum
    /// layer.
    pub fn from_records(
        params: &'a ProtocolParams,
        attack: &'a AttackSpec,
        records: Vec<PlayerRecord>,
        seed: u64,
    ) -> Result<Self, ParamError> {
        params.validate()?;
        attack.validate(params.players).map_err(ParamError)?;
        if records.len() != params.players
            || records.iter().enumerate().any(|(i, r)| {
                r.id != i + 1 || r.b.len() != params.rounds || r.v.len() != params.rounds
            })
        {
            return Err(ParamError("records do not match the parameters".into()));
        }
        let mut channel = Channel::new(params.players, stream(seed, Stream::Channel));
        channel.block_at(attack.block_at);
        channel.set_coin_abort(attack.coin_abort);
        Ok(Session {
            params,
            attack,
            records,
            channel,
            stats: SessionStats {
                n: params.rounds,
                ..SessionStats::default()
            },
            eavesdropper: Vec::new(),
            adversary_rng: stream(seed, Stream::Adversary),
            bases: BTreeMap::new(),
            check_subset: Vec::new(),
            check_values: BTreeMap::new(),
            check_rounds: Vec::new(),
            live: Vec::new(),
            code: None,
        })
    }

    pub fn params(&self) -> &ProtocolParams {
        self.params
    }

    /// Rounds currently kept, as indices into the original `N` rounds.
    pub fn live_rounds(&self) -> &[usize] {
        &self.live
    }

    /// Conclusive check rounds after sifting.
    pub fn check_rounds(&self) -> &[usize] {
        &self.check_rounds
    }

    pub fn check_subset(&self) -> &[usize] {
        &self.check_subset
    }

    /// Values revealed on the check subset, in subset order.
    pub fn check_values(&self) -> &BTreeMap<PlayerId, Bits> {
        &self.check_values
    }

    pub fn code(&self) -> Option<&LinearCode> {
        self.code.as_ref()
    }

    /// Player `j`'s values on the live rounds.
    pub fn key_string(&self, j: PlayerId) -> Bits {
        self.records[j - 1].v.select(&self.live)
    }

    fn channel_abort(stage: Stage) -> impl Fn(ChannelError) -> AbortStage {
        move |_| AbortStage::Channel(stage)
    }

    fn view(&self, j: PlayerId, stage: Stage) -> View<'_> {
        View {
            player: j,
            stage,
            own_bases: &self.records[j - 1].b,
            own_values: &self.records[j - 1].v,
            transcript: self.channel.transcript(),
        }
    }

    /// All basis strings are broadcast in full; value strings are committed
    /// together with them and revealed on a random subset of `τ′` rounds
    /// afterwards. Corrupted players' committed strings become their
    /// working strings.
    pub fn announcements(&mut self) -> Result<(), AbortStage> {
        let n = self.params.rounds;
        let abort = Self::channel_abort(Stage::Basis);
        let mut bases = self.channel.subset_session(n, n).map_err(&abort)?;
        let mut values = self.channel.subset_session(n, self.params.tau_prime).map_err(&abort)?;
        for j in 1..=self.params.players {
            if let Some(policy) = self.attack.policy(j) {
                let view = View {
                    player: j,
                    stage: Stage::Basis,
                    own_bases: &self.records[j - 1].b,
                    own_values: &self.records[j - 1].v,
                    transcript: self.channel.transcript(),
                };
                let b = policy.bases(&view, &mut self.adversary_rng);
                let v = policy.values(&view, &mut self.adversary_rng);
                self.records[j - 1].b = b;
                self.records[j - 1].v = v;
            }
            let record = &self.records[j - 1];
            bases.commit(j, record.b.clone()).map_err(&abort)?;
            values.commit(j, record.v.clone()).map_err(&abort)?;
        }
        let revealed = self.channel.reveal_subset(&mut bases, n, Stage::Basis, false).map_err(&abort)?;
        self.bases = revealed.values;
        let revealed = self
            .channel
            .reveal_subset(&mut values, n, Stage::CheckValues, true)
            .map_err(Self::channel_abort(Stage::CheckValues))?;
        self.check_subset = revealed.subset;
        self.check_values = revealed.values;
        Ok(())
    }

    /// XOR of the announced basis bits per round; set means inconclusive.
    pub fn basis_parity(&self) -> Bits {
        xor_all(self.bases.values()).unwrap_or_default()
    }

    /// Drops inconclusive rounds and aborts if fewer than `τ′/4` check
    /// rounds survive.
    pub fn sift(&mut self) -> Result<(), AbortStage> {
        let parity = self.basis_parity();
        self.live = (0..self.params.rounds).filter(|&n| !parity.get(n)).collect();
        self.stats.u = self.params.rounds - self.live.len();
        self.stats.l = self.live.len();
        self.check_rounds = self.check_subset.iter().copied().filter(|&n| !parity.get(n)).collect();
        self.stats.tau = self.check_rounds.len();
        if 4 * self.stats.tau < self.params.tau_prime {
            return Err(AbortStage::Sifting);
        }
        Ok(())
    }

    /// Sum over players of `2v + b` in round `n`, mod 4, using announced
    /// bases and the given value bits.
    fn parity_sum(&self, n: usize, value: impl Fn(PlayerId) -> bool) -> u32 {
        self.bases
            .iter()
            .map(|(&j, b)| 2 * u32::from(value(j)) + u32::from(b.get(n)))
            .sum::<u32>()
            % 4
    }

    /// Fraction of check rounds whose sum of `2v + b` is 2 mod 4; aborts
    /// above `δ`. The check rounds are then discarded.
    pub fn estimate_error(&mut self) -> Result<(), AbortStage> {
        let parity = self.basis_parity();
        let mut errors = 0usize;
        for (pos, &n) in self.check_subset.iter().enumerate() {
            if parity.get(n) {
                continue;
            }
            if self.parity_sum(n, |j| self.check_values[&j].get(pos)) == 2 {
                errors += 1;
            }
        }
        let q = if self.stats.tau == 0 {
            0.0
        } else {
            errors as f64 / self.stats.tau as f64
        };
        self.stats.q = Some(q);
        if q > self.params.delta {
            return Err(AbortStage::Estimation);
        }
        let checks = &self.check_rounds;
        self.live.retain(|n| checks.binary_search(n).is_err());
        self.stats.m = self.live.len();
        Ok(())
    }

    fn residual(&self) -> usize {
        self.live
            .iter()
            .filter(|&&n| self.records.iter().fold(false, |acc, r| acc ^ r.v.get(n)))
            .count()
    }

    /// Player `J` aligns its values with the XOR of the others: first the
    /// basis-dependent flip, then syndrome decoding against the announced
    /// syndromes.
    pub fn correct_errors(&mut self) -> Result<(), AbortStage> {
        let m = self.live.len();
        let rate = self.stats.q.unwrap_or(0.0) + self.params.nu;
        let code = LinearCode::for_error_rate(m, rate, &self.params.code).map_err(|_| AbortStage::CodeConstruction)?;
        self.stats.chi = code.syndrome_length();

        let last = self.params.players;
        for i in 0..self.live.len() {
            let n = self.live[i];
            let b_sum: u32 = self.bases.values().map(|b| u32::from(b.get(n))).sum();
            if b_sum % 4 == 2 {
                self.records[last - 1].v.flip(n);
            }
        }
        self.stats.residual_before = Some(self.residual());

        let mut target = Bits::zeros(code.syndrome_length());
        let abort = Self::channel_abort(Stage::Syndrome);
        for j in 1..last {
            let mut w = code.syndrome(&self.key_string(j)).expect("key length matches the code");
            if let Some(policy) = self.attack.policy(j) {
                w = policy.syndrome(w, &self.view(j, Stage::Syndrome));
            }
            self.channel.broadcast(j, Stage::Syndrome, w.clone()).map_err(&abort)?;
            target ^= &w;
        }
        if self.channel.is_blocked() {
            return Err(abort(ChannelError::Blocked));
        }
        target ^= &code.syndrome(&self.key_string(last)).expect("key length matches the code");
        match code.decode_error(&target) {
            Ok(e) => {
                for i in e.ones() {
                    let n = self.live[i];
                    self.records[last - 1].v.flip(n);
                }
            }
            Err(_) => self.stats.decoder_failed = true,
        }
        self.stats.residual_after = Some(self.residual());
        self.code = Some(code);
        Ok(())
    }

    /// Everyone broadcasts a shared random hash of its key string; the
    /// hashes must XOR to zero.
    pub fn correctness_check(&mut self) -> Result<(), AbortStage> {
        let m = self.live.len();
        let eta = self.params.eta;
        let coins = self
            .channel
            .coin_flip_bits(toeplitz::seed_len(m, eta), Stage::CorrectnessSeed)
            .map_err(Self::channel_abort(Stage::CorrectnessSeed))?;
        let hash = ToeplitzHash::sample(m, eta, &coins).expect("seed length matches");
        let mut acc = Bits::zeros(eta);
        for j in 1..=self.params.players {
            let mut c = hash.eval(&self.key_string(j)).expect("key length matches");
            if let Some(policy) = self.attack.policy(j) {
                c = policy.check_hash(c, &self.view(j, Stage::CorrectnessHash));
            }
            self.channel
                .broadcast(j, Stage::CorrectnessHash, c.clone())
                .map_err(Self::channel_abort(Stage::CorrectnessHash))?;
            acc ^= &c;
        }
        if !acc.is_zero() {
            return Err(AbortStage::CorrectnessCheck);
        }
        Ok(())
    }

    /// Realized sizes as bound inputs, with `K = 0`.
    pub fn bound_inputs(&self) -> BoundInputs {
        let s = &self.stats;
        BoundInputs {
            n: s.n as f64,
            l: s.l as f64,
            m: s.m as f64,
            tau: s.tau as f64,
            tau_prime: self.params.tau_prime as f64,
            delta: self.params.delta,
            nu: self.params.nu,
            mu: self.params.mu,
            q: s.q.unwrap_or(0.0),
            eta: self.params.eta as f64,
            chi: s.chi as f64,
            k: 0.0,
            honest: self.attack.honest_players(self.params.players).len(),
            p_ec: 0.0,
        }
    }

    /// Compresses every key string to `K` bits with a shared random hash.
    pub fn privacy_amplify(&mut self) -> Result<(), AbortStage> {
        let m = self.live.len();
        let k = match self.params.key_length {
            KeyLength::Fixed(k) => k,
            KeyLength::Auto { target_eps } => solve_key_length(&self.bound_inputs(), target_eps)
                .map_err(|_| AbortStage::KeyLength)?
                .k,
        };
        if k >= m {
            return Err(AbortStage::KeyLength);
        }
        self.stats.k = k;
        let coins = self
            .channel
            .coin_flip_bits(toeplitz::seed_len(m, k), Stage::AmplificationSeed)
            .map_err(Self::channel_abort(Stage::AmplificationSeed))?;
        let hash = ToeplitzHash::sample(m, k, &coins).expect("seed length matches");
        for j in 1..=self.params.players {
            let share = hash.eval(&self.key_string(j)).expect("key length matches");
            self.records[j - 1].share = Some(share);
        }
        let shares: Vec<&Bits> = self.records.iter().filter_map(|r| r.share.as_ref()).collect();
        self.stats.xor_zero = xor_all(shares).map(|x| x.is_zero());
        Ok(())
    }

    fn pipeline(&mut self) -> Result<(), AbortStage> {
        self.announcements()?;
        self.sift()?;
        self.estimate_error()?;
        self.correct_errors()?;
        self.correctness_check()?;
        self.privacy_amplify()
    }

    /// Runs every remaining step and packages the result.
    pub fn run(mut self) -> SessionOutcome {
        let result = self.pipeline();
        self.finish(result)
    }

    fn finish(mut self, result: Result<(), AbortStage>) -> SessionOutcome {
        let shares = match result {
            Ok(()) => Some(
                self.records
                    .iter()
                    .map(|r| (r.id, r.share.clone().expect("share set after amplification")))
                    .collect(),
            ),
            Err(stage) => {
                self.stats.abort = Some(stage);
                self.stats.xor_zero = None;
                for r in &mut self.records {
                    r.share = None;
                }
                None
            }
        };
        SessionOutcome {
            shares,
            honest: self.attack.honest_players(self.params.players),
            transcript: self.channel.into_transcript(),
            stats: self.stats,
            eavesdropper: self.eavesdropper,
        }
    }
}

/// Runs a complete session. All randomness derives from `seed`.
pub fn run_session(
    params: &ProtocolParams,
    variant: Variant,
    attack: &AttackSpec,
    seed: u64,
) -> Result<SessionOutcome, ParamError> {
    Ok(Session::new(params, variant, attack, seed)?.run())
}
