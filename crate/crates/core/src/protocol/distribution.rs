//! State distribution: prepare-and-measure along the line, or a GHZ-type
//! state built by a CNOT chain and measured by everyone.

use serde::{Deserialize, Serialize};

use super::{ParamError, PlayerRecord, ProtocolParams, SessionRngs};
use crate::adversary::{apply_link_attack, AttackSpec, EavesdropEvent};
use crate::bits::Bits;
use crate::quantum::{MeasurementBasis, PhaseExponent, QuantumError, QuantumRegister};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    PrepareMeasure,
    Entangled,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::PrepareMeasure => "pm",
            Variant::Entangled => "eb",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pm" | "prepare-measure" => Ok(Variant::PrepareMeasure),
            "eb" | "entangled" => Ok(Variant::Entangled),
            _ => Err(format!("unknown variant `{s}` (expected pm or eb)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    pub records: Vec<PlayerRecord>,
    pub eavesdropper: Vec<EavesdropEvent>,
}

/// Per-player basis bits, and value bits for the players that choose them.
fn sample_choices(params: &ProtocolParams, rngs: &mut SessionRngs, with_values: bool) -> Vec<PlayerRecord> {
    let n = params.rounds;
    (1..=params.players)
        .map(|j| {
            let rng = rngs.player(j);
            let b = Bits::random(n, rng);
            let v = if with_values && j < params.players {
                Bits::random(n, rng)
            } else {
                Bits::zeros(n)
            };
            PlayerRecord::new(j, b, v)
        })
        .collect()
}

/// Noise and attack on the qubit `target` as it crosses `link`.
fn cross_link(
    params: &ProtocolParams,
    attack: &AttackSpec,
    rngs: &mut SessionRngs,
    link: usize,
    round: usize,
    reg: &mut QuantumRegister,
    target: usize,
    prior_basis: bool,
    eavesdropper: &mut Vec<EavesdropEvent>,
) -> Result<(), QuantumError> {
    if let Some(ev) = apply_link_attack(&attack.link, link, round, reg, target, prior_basis, &mut rngs.adversary)? {
        eavesdropper.push(ev);
    }
    if link == params.noise_link() && params.mu > 0.0 {
        reg.apply_phase_flip_noise(target, params.mu, &mut rngs.quantum)?;
    }
    Ok(())
}

/// Player 1 prepares `Z^{x¹}|+⟩`, players `2..J−1` apply `Z^{xʲ}`, player
/// `J` measures in its basis.
pub fn run_pm_distribution(
    params: &ProtocolParams,
    attack: &AttackSpec,
    rngs: &mut SessionRngs,
) -> Result<Distribution, ParamError> {
    params.validate_line(false)?;
    let mut records = sample_choices(params, rngs, true);
    let j_max = params.players;
    let mut eavesdropper = Vec::new();
    for n in 0..params.rounds {
        let x = |r: &PlayerRecord| PhaseExponent::from_bits(r.b.get(n), r.v.get(n));
        let mut reg = QuantumRegister::prepare_initial(x(&records[0]));
        let mut prior = records[0].b.get(n);
        for link in 1..j_max {
            cross_link(params, attack, rngs, link, n, &mut reg, 0, prior, &mut eavesdropper).map_err(internal)?;
            let next = &records[link];
            if link + 1 < j_max {
                reg.apply_z_power(0, x(next)).map_err(internal)?;
                prior ^= next.b.get(n);
            }
        }
        let basis = MeasurementBasis::from_bit(records[j_max - 1].b.get(n));
        let outcome = reg.measure(0, basis, &mut rngs.quantum).map_err(internal)?;
        records[j_max - 1].v.set(n, outcome);
    }
    Ok(Distribution { records, eavesdropper })
}

/// Player 1 creates a Bell pair and keeps one half; each middle player
/// entangles a fresh qubit with the travelling one by a CNOT and keeps it;
/// player `J` keeps the travelling qubit. Everybody measures in its basis.
pub fn run_eb_distribution(
    params: &ProtocolParams,
    attack: &AttackSpec,
    rngs: &mut SessionRngs,
) -> Result<Distribution, ParamError> {
    params.validate_line(true)?;
    let mut records = sample_choices(params, rngs, false);
    let j_max = params.players;
    let mut eavesdropper = Vec::new();
    let mut held = Vec::with_capacity(j_max);
    for n in 0..params.rounds {
        let mut reg = QuantumRegister::bell_pair();
        let travelling = 1;
        held.clear();
        held.push(0);
        let mut prior = records[0].b.get(n);
        for link in 1..j_max {
            cross_link(params, attack, rngs, link, n, &mut reg, travelling, prior, &mut eavesdropper)
                .map_err(internal)?;
            if link + 1 < j_max {
                let fresh = reg.push_zero().map_err(internal)?;
                reg.apply_cnot(travelling, fresh).map_err(internal)?;
                held.push(fresh);
                prior ^= records[link].b.get(n);
            }
        }
        held.push(travelling);
        for (record, &q) in records.iter_mut().zip(&held) {
            let basis = MeasurementBasis::from_bit(record.b.get(n));
            let outcome = reg.measure(q, basis, &mut rngs.quantum).map_err(internal)?;
            record.v.set(n, outcome);
        }
    }
    Ok(Distribution { records, eavesdropper })
}

pub fn run_distribution(
    variant: Variant,
    params: &ProtocolParams,
    attack: &AttackSpec,
    rngs: &mut SessionRngs,
) -> Result<Distribution, ParamError> {
    match variant {
        Variant::PrepareMeasure => run_pm_distribution(params, attack, rngs),
        Variant::Entangled => run_eb_distribution(params, attack, rngs),
    }
}

fn internal(e: QuantumError) -> ParamError {
    ParamError(format!("quantum layer: {e}"))
}
