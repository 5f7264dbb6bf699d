use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coding::CodeConfig;
use crate::quantum::MAX_QUBITS;

#[derive(Debug, Clone, Error, PartialEq)]
#[error("invalid parameters: {0}")]
pub struct ParamError(pub String);

/// How the final share length is picked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyLength {
    Fixed(usize),
    /// Largest `K` whose security bound at the realized sizes stays within
    /// `target_eps`.
    Auto { target_eps: f64 },
}

/// Session parameters, all fixed before the first round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Number of players `J`.
    pub players: usize,
    /// Rounds `N`.
    pub rounds: usize,
    /// Correctness hash length `η`.
    pub eta: usize,
    /// Check rounds sampled before sifting, `τ′`.
    pub tau_prime: usize,
    /// Abort threshold on the estimated error rate.
    pub delta: f64,
    /// Error-correction margin `ν`.
    pub nu: f64,
    pub key_length: KeyLength,
    /// Phase-flip probability on the noisy link.
    pub mu: f64,
    /// Link carrying the noise; link `j` runs from player `j` to `j + 1`.
    /// Defaults to the last link.
    pub noise_link: Option<usize>,
    pub code: CodeConfig,
}

impl ProtocolParams {
    /// Honest noiseless defaults for `players` players and `rounds` rounds.
    pub fn new(players: usize, rounds: usize) -> Self {
        ProtocolParams {
            players,
            rounds,
            eta: 32,
            tau_prime: (rounds / 16).max(1),
            delta: 0.1,
            nu: 0.02,
            key_length: KeyLength::Fixed(rounds / 8),
            mu: 0.0,
            noise_link: None,
            code: CodeConfig::default(),
        }
    }

    pub fn noise_link(&self) -> usize {
        self.noise_link.unwrap_or(self.players.saturating_sub(1))
    }

    /// Checks what the quantum layer needs: the line itself, the noise, and
    /// for entangled rounds the register size.
    pub fn validate_line(&self, entangled: bool) -> Result<(), ParamError> {
        let err = |m: String| Err(ParamError(m));
        if self.players < 2 {
            return err(format!("need at least 2 players, got {}", self.players));
        }
        if self.rounds == 0 {
            return err("need at least one round".into());
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return err(format!("mu = {} is not a probability", self.mu));
        }
        if !(1..self.players).contains(&self.noise_link()) {
            return err(format!("noise link {} is not an edge of the line", self.noise_link()));
        }
        if entangled && self.players > MAX_QUBITS {
            return err(format!(
                "entanglement-based rounds hold {} qubits, limit is {MAX_QUBITS}",
                self.players
            ));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let err = |m: String| Err(ParamError(m));
        self.validate_line(false)?;
        if !(self.tau_prime > 0 && self.tau_prime < self.rounds) {
            return err(format!("need 0 < tau' < N, got tau'={} N={}", self.tau_prime, self.rounds));
        }
        if self.eta == 0 {
            return err("eta must be positive".into());
        }
        if !(0.0..0.5).contains(&self.delta) {
            return err(format!("delta = {} outside [0, 1/2)", self.delta));
        }
        if !(0.0..0.5).contains(&self.nu) {
            return err(format!("nu = {} outside [0, 1/2)", self.nu));
        }
        match self.key_length {
            KeyLength::Fixed(0) => return err("key length must be positive".into()),
            KeyLength::Auto { target_eps } if !(target_eps > 0.0) => {
                return err("target epsilon must be positive".into())
            }
            _ => {}
        }
        if !(self.code.overhead >= 0.0) || self.code.column_weight == 0 {
            return err("code overhead must be non-negative and column weight positive".into());
        }
        Ok(())
    }
}
