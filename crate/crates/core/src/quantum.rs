//! Dense state-vector simulation of the handful of qubits alive in one
//! protocol round.
//!
//! Qubit `q` is bit `q` of the basis-state index. The four protocol states
//! are `Z^{k/2}|+>` for `k = 0..4`: `|+>`, `|+i>`, `|->`, `|-i>`.
//! Outcome labels: Hadamard `|+> -> 0`, `|-> -> 1`; circular
//! `|-i> -> 0`, `|+i> -> 1`. With that labelling the eigenstate reported as
//! outcome `v` in basis `b` is `Z^{k/2}|+>` with `k = -(2v + b) mod 4`.

use std::fmt;
use std::ops::Add;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_QUBITS: usize = 24;

const NORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum QuantumError {
    #[error("qubit {index} out of range for a {num_qubits}-qubit register")]
    QubitOutOfRange { index: usize, num_qubits: usize },
    #[error("control and target must differ (both {0})")]
    SameQubit(usize),
    #[error("register would exceed {MAX_QUBITS} qubits")]
    TooManyQubits,
    #[error("amplitude vector of length {0} is not a power of two")]
    BadDimension(usize),
    #[error("state is not normalized (squared norm {0})")]
    NotNormalized(f64),
    #[error("selected measurement branch has zero probability")]
    ZeroNormBranch,
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
}

/// `Z^{quarter/2}`, i.e. a phase of `i^quarter` on `|1>`. Exponents form Z4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PhaseExponent(u8);

impl PhaseExponent {
    pub const IDENTITY: PhaseExponent = PhaseExponent(0);

    pub fn new(quarter_index: u8) -> Self {
        PhaseExponent(quarter_index % 4)
    }

    /// The exponent a player derives from its basis and value bits: `b + 2v`.
    pub fn from_bits(basis: bool, value: bool) -> Self {
        PhaseExponent(u8::from(basis) + 2 * u8::from(value))
    }

    pub fn quarter_index(self) -> u8 {
        self.0
    }

    pub fn inverse(self) -> Self {
        PhaseExponent((4 - self.0) % 4)
    }

    /// `i^quarter_index`
    pub fn phase(self) -> Complex64 {
        match self.0 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    }
}

impl Add for PhaseExponent {
    type Output = PhaseExponent;

    fn add(self, rhs: PhaseExponent) -> PhaseExponent {
        PhaseExponent((self.0 + rhs.0) % 4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementBasis {
    Hadamard,
    Circular,
}

impl MeasurementBasis {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            MeasurementBasis::Circular
        } else {
            MeasurementBasis::Hadamard
        }
    }

    pub fn bit(self) -> bool {
        self == MeasurementBasis::Circular
    }

    pub fn other(self) -> Self {
        MeasurementBasis::from_bit(!self.bit())
    }

    /// The exponent of the eigenstate labelled `outcome`.
    pub fn eigenstate(self, outcome: bool) -> PhaseExponent {
        let k = 2 * u8::from(outcome) + u8::from(self.bit());
        PhaseExponent::new(k).inverse()
    }
}

impl fmt::Display for MeasurementBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeasurementBasis::Hadamard => "hadamard",
            MeasurementBasis::Circular => "circular",
        })
    }
}

pub type Gate = [[Complex64; 2]; 2];

#[derive(Clone, PartialEq)]
pub struct QuantumRegister {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl fmt::Debug for QuantumRegister {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuantumRegister")
            .field("num_qubits", &self.num_qubits)
            .field("amplitudes", &self.amplitudes)
            .finish()
    }
}

impl QuantumRegister {
    /// `|0...0>` on `num_qubits` qubits.
    pub fn zero(num_qubits: usize) -> Result<Self, QuantumError> {
        if num_qubits > MAX_QUBITS {
            return Err(QuantumError::TooManyQubits);
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(QuantumRegister {
            num_qubits,
            amplitudes,
        })
    }

    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self, QuantumError> {
        let dim = amplitudes.len();
        if dim == 0 || !dim.is_power_of_two() {
            return Err(QuantumError::BadDimension(dim));
        }
        let num_qubits = dim.trailing_zeros() as usize;
        if num_qubits > MAX_QUBITS {
            return Err(QuantumError::TooManyQubits);
        }
        let reg = QuantumRegister {
            num_qubits,
            amplitudes,
        };
        let norm = reg.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(QuantumError::NotNormalized(norm));
        }
        Ok(reg)
    }

    /// The single-qubit state `Z^{x}|+>` sent by the first player.
    pub fn prepare_initial(x: PhaseExponent) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        QuantumRegister {
            num_qubits: 1,
            amplitudes: vec![Complex64::new(s, 0.0), x.phase() * s],
        }
    }

    /// `(|00> + |11>)/sqrt(2)` on qubits 0 and 1.
    pub fn bell_pair() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let zero = Complex64::new(0.0, 0.0);
        QuantumRegister {
            num_qubits: 2,
            amplitudes: vec![Complex64::new(s, 0.0), zero, zero, Complex64::new(s, 0.0)],
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Fidelity-style overlap `|<self|other>|^2`.
    pub fn overlap(&self, other: &QuantumRegister) -> f64 {
        assert_eq!(self.num_qubits, other.num_qubits);
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            .norm_sqr()
    }

    fn check(&self, q: usize) -> Result<(), QuantumError> {
        if q >= self.num_qubits {
            Err(QuantumError::QubitOutOfRange {
                index: q,
                num_qubits: self.num_qubits,
            })
        } else {
            Ok(())
        }
    }

    /// Appends a fresh `|0>` qubit and returns its index.
    pub fn push_zero(&mut self) -> Result<usize, QuantumError> {
        if self.num_qubits + 1 > MAX_QUBITS {
            return Err(QuantumError::TooManyQubits);
        }
        self.amplitudes
            .resize(self.amplitudes.len() * 2, Complex64::new(0.0, 0.0));
        self.num_qubits += 1;
        Ok(self.num_qubits - 1)
    }

    pub fn apply_z_power(&mut self, target: usize, x: PhaseExponent) -> Result<(), QuantumError> {
        self.check(target)?;
        if x == PhaseExponent::IDENTITY {
            return Ok(());
        }
        let phase = x.phase();
        let mask = 1usize << target;
        for (idx, amp) in self.amplitudes.iter_mut().enumerate() {
            if idx & mask != 0 {
                *amp *= phase;
            }
        }
        Ok(())
    }

    pub fn apply_z(&mut self, target: usize) -> Result<(), QuantumError> {
        self.apply_z_power(target, PhaseExponent::new(2))
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<(), QuantumError> {
        self.check(control)?;
        self.check(target)?;
        if control == target {
            return Err(QuantumError::SameQubit(control));
        }
        let cmask = 1usize << control;
        let tmask = 1usize << target;
        for idx in 0..self.amplitudes.len() {
            if idx & cmask != 0 && idx & tmask == 0 {
                self.amplitudes.swap(idx, idx | tmask);
            }
        }
        Ok(())
    }

    /// Applies an arbitrary 2x2 matrix; unitarity is the caller's business
    /// and is checked through the norm.
    pub fn apply_gate(&mut self, target: usize, gate: &Gate) -> Result<(), QuantumError> {
        self.check(target)?;
        let mask = 1usize << target;
        for idx in 0..self.amplitudes.len() {
            if idx & mask == 0 {
                let a0 = self.amplitudes[idx];
                let a1 = self.amplitudes[idx | mask];
                self.amplitudes[idx] = gate[0][0] * a0 + gate[0][1] * a1;
                self.amplitudes[idx | mask] = gate[1][0] * a0 + gate[1][1] * a1;
            }
        }
        let norm = self.norm_sqr();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(QuantumError::NotNormalized(norm));
        }
        Ok(())
    }

    /// Probability of reading `outcome` when measuring `target` in `basis`.
    pub fn outcome_probability(
        &self,
        target: usize,
        basis: MeasurementBasis,
        outcome: bool,
    ) -> Result<f64, QuantumError> {
        self.check(target)?;
        let conj_phase = basis.eigenstate(outcome).phase().conj();
        let mask = 1usize << target;
        let mut p = 0.0;
        for idx in 0..self.amplitudes.len() {
            if idx & mask == 0 {
                let c = (self.amplitudes[idx] + conj_phase * self.amplitudes[idx | mask]) * 0.5f64.sqrt();
                p += c.norm_sqr();
            }
        }
        Ok(p.clamp(0.0, 1.0))
    }

    /// Projects `target` onto the eigenstate labelled `outcome` and
    /// renormalizes. Returns the branch probability.
    pub fn project(
        &mut self,
        target: usize,
        basis: MeasurementBasis,
        outcome: bool,
    ) -> Result<f64, QuantumError> {
        self.check(target)?;
        let phase = basis.eigenstate(outcome).phase();
        let conj_phase = phase.conj();
        let mask = 1usize << target;
        let mut p = 0.0;
        for idx in 0..self.amplitudes.len() {
            if idx & mask == 0 {
                // <e|psi> on this slice, then |e><e|psi> back into both slots
                let c = (self.amplitudes[idx] + conj_phase * self.amplitudes[idx | mask]) * 0.5;
                self.amplitudes[idx] = c;
                self.amplitudes[idx | mask] = phase * c;
                p += 2.0 * c.norm_sqr();
            }
        }
        if p <= 1e-300 {
            return Err(QuantumError::ZeroNormBranch);
        }
        let scale = 1.0 / p.sqrt();
        for a in &mut self.amplitudes {
            *a *= scale;
        }
        Ok(p)
    }

    /// Born-rule measurement with collapse.
    pub fn measure<R: Rng + ?Sized>(
        &mut self,
        target: usize,
        basis: MeasurementBasis,
        rng: &mut R,
    ) -> Result<bool, QuantumError> {
        let p_one = self.outcome_probability(target, basis, true)?;
        let outcome = rng.gen::<f64>() < p_one;
        self.project(target, basis, outcome)?;
        Ok(outcome)
    }

    /// Applies `Z` to `target` with probability `mu`; returns whether it did.
    pub fn apply_phase_flip_noise<R: Rng + ?Sized>(
        &mut self,
        target: usize,
        mu: f64,
        rng: &mut R,
    ) -> Result<bool, QuantumError> {
        if !(0.0..=1.0).contains(&mu) {
            return Err(QuantumError::BadProbability(mu));
        }
        self.check(target)?;
        let flip = mu > 0.0 && rng.gen::<f64>() < mu;
        if flip {
            self.apply_z(target)?;
        }
        Ok(flip)
    }

    /// The basis in which the single qubit `target` is in an eigenstate,
    /// with its outcome, if any. Only meaningful for product states.
    pub fn eigenbasis_of(&self, target: usize) -> Result<Option<(MeasurementBasis, bool)>, QuantumError> {
        for basis in [MeasurementBasis::Hadamard, MeasurementBasis::Circular] {
            for outcome in [false, true] {
                if self.outcome_probability(target, basis, outcome)? > 1.0 - 1e-9 {
                    return Ok(Some((basis, outcome)));
                }
            }
        }
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn assert_state(reg: &QuantumRegister, expected: &[Complex64]) {
        assert_eq!(reg.amplitudes().len(), expected.len());
        for (a, e) in reg.amplitudes().iter().zip(expected) {
            assert!((a - e).norm() < 1e-12, "{:?} vs {:?}", reg.amplitudes(), expected);
        }
    }

    // 2x2 matrix times vector, written out independently of the register code.
    fn matvec(m: [[Complex64; 2]; 2], v: [Complex64; 2]) -> [Complex64; 2] {
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    #[test]
    fn initial_states() {
        assert_state(&QuantumRegister::prepare_initial(PhaseExponent::new(0)), &[c(S, 0.0), c(S, 0.0)]);
        assert_state(&QuantumRegister::prepare_initial(PhaseExponent::new(2)), &[c(S, 0.0), c(-S, 0.0)]);
        let phase_gate = [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 1.0)]];
        let expected = matvec(phase_gate, [c(S, 0.0), c(S, 0.0)]);
        assert_state(&QuantumRegister::prepare_initial(PhaseExponent::new(1)), &expected);
    }

    #[test]
    fn z_power_composition() {
        let plus = QuantumRegister::prepare_initial(PhaseExponent::IDENTITY);
        let mut r = plus.clone();
        r.apply_z_power(0, PhaseExponent::new(0)).unwrap();
        assert_eq!(r, plus);

        r.apply_z_power(0, PhaseExponent::new(1)).unwrap();
        r.apply_z_power(0, PhaseExponent::new(3)).unwrap();
        assert_state(&r, plus.amplitudes());

        let phase_gate = [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 1.0)]];
        let twice = matvec(phase_gate, matvec(phase_gate, [c(S, 0.0), c(S, 0.0)]));
        let mut r = plus.clone();
        r.apply_z_power(0, PhaseExponent::new(1)).unwrap();
        r.apply_z_power(0, PhaseExponent::new(1)).unwrap();
        assert_state(&r, &twice);
        assert_state(&r, &[c(S, 0.0), c(-S, 0.0)]);
    }

    #[test]
    fn z_power_target_checked() {
        let mut r = QuantumRegister::zero(2).unwrap();
        assert_eq!(
            r.apply_z_power(2, PhaseExponent::new(1)),
            Err(QuantumError::QubitOutOfRange { index: 2, num_qubits: 2 })
        );
    }

    #[test]
    fn cnot_cases() {
        let mut r = QuantumRegister::zero(2).unwrap();
        r.apply_cnot(1, 0).unwrap();
        assert_state(&r, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);

        // |10>: qubit 0 (control) is 1 -> index 1; target qubit 1 flips -> index 3
        let zero = c(0.0, 0.0);
        let mut r = QuantumRegister::from_amplitudes(vec![zero, c(1.0, 0.0), zero, zero]).unwrap();
        r.apply_cnot(0, 1).unwrap();
        assert_state(&r, &[zero, zero, zero, c(1.0, 0.0)]);

        // Bell pair extended with |0>, CNOT(1 -> 2): GHZ3 amplitudes at 000 and 111
        let mut r = QuantumRegister::bell_pair();
        let fresh = r.push_zero().unwrap();
        r.apply_cnot(1, fresh).unwrap();
        let mut ghz = vec![zero; 8];
        ghz[0] = c(S, 0.0);
        ghz[7] = c(S, 0.0);
        assert_state(&r, &ghz);

        assert_eq!(r.apply_cnot(1, 1), Err(QuantumError::SameQubit(1)));
        assert!(r.apply_cnot(0, 3).is_err());
    }

    #[test]
    fn measurement_conventions() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..20 {
            let mut plus = QuantumRegister::prepare_initial(PhaseExponent::new(0));
            assert!(!plus.measure(0, MeasurementBasis::Hadamard, &mut rng).unwrap());
            let mut plus_i = QuantumRegister::prepare_initial(PhaseExponent::new(1));
            assert!(plus_i.measure(0, MeasurementBasis::Circular, &mut rng).unwrap());
            let mut minus_i = QuantumRegister::prepare_initial(PhaseExponent::new(3));
            assert!(!minus_i.measure(0, MeasurementBasis::Circular, &mut rng).unwrap());
        }
        // Born rule: |<+i|+>|^2 = |(1 + i)/2|^2 = 1/2
        let plus = QuantumRegister::prepare_initial(PhaseExponent::new(0));
        let p = plus.outcome_probability(0, MeasurementBasis::Circular, true).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
    }

    #[test]
    fn eigenstate_labels_match_convention() {
        for basis in [MeasurementBasis::Hadamard, MeasurementBasis::Circular] {
            for outcome in [false, true] {
                let reg = QuantumRegister::prepare_initial(basis.eigenstate(outcome));
                let p = reg.outcome_probability(0, basis, outcome).unwrap();
                assert!((p - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn noise_extremes_and_frequency() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let plus = QuantumRegister::prepare_initial(PhaseExponent::IDENTITY);
        let mut r = plus.clone();
        for _ in 0..100 {
            assert!(!r.apply_phase_flip_noise(0, 0.0, &mut rng).unwrap());
        }
        assert_eq!(r, plus);
        let mut r = plus.clone();
        r.apply_phase_flip_noise(0, 1.0, &mut rng).unwrap();
        assert_state(&r, &[c(S, 0.0), c(-S, 0.0)]);

        let trials = 100_000;
        let mut ones = 0;
        for _ in 0..trials {
            let mut r = plus.clone();
            r.apply_phase_flip_noise(0, 0.05, &mut rng).unwrap();
            if r.measure(0, MeasurementBasis::Hadamard, &mut rng).unwrap() {
                ones += 1;
            }
        }
        let freq = ones as f64 / trials as f64;
        assert!((freq - 0.05).abs() < 0.003, "{freq}");
        assert!(r.apply_phase_flip_noise(0, 1.5, &mut rng).is_err());
    }

    #[test]
    fn z_flips_both_bases_on_protocol_states() {
        for k in 0..4 {
            let psi = QuantumRegister::prepare_initial(PhaseExponent::new(k));
            let mut zpsi = psi.clone();
            zpsi.apply_z(0).unwrap();
            for basis in [MeasurementBasis::Hadamard, MeasurementBasis::Circular] {
                for outcome in [false, true] {
                    let a = psi.outcome_probability(0, basis, outcome).unwrap();
                    let b = zpsi.outcome_probability(0, basis, !outcome).unwrap();
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn seeded_measurements_repeat() {
        let run = |seed| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            (0..64)
                .map(|_| {
                    let mut r = QuantumRegister::prepare_initial(PhaseExponent::IDENTITY);
                    r.measure(0, MeasurementBasis::Circular, &mut rng).unwrap()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    fn random_state(seed: u64, n: usize) -> QuantumRegister {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut amps: Vec<Complex64> = (0..1 << n).map(|_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut amps {
            *a /= norm;
        }
        QuantumRegister::from_amplitudes(amps).unwrap()
    }

    proptest! {
        #[test]
        fn norm_preserved(seed in any::<u64>(), k in 0u8..4, q in 0usize..3) {
            let mut r = random_state(seed, 3);
            r.apply_z_power(q, PhaseExponent::new(k)).unwrap();
            prop_assert!((r.norm_sqr() - 1.0).abs() < 1e-12);
            r.apply_cnot(q, (q + 1) % 3).unwrap();
            prop_assert!((r.norm_sqr() - 1.0).abs() < 1e-12);
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            r.measure(q, MeasurementBasis::from_bit(k % 2 == 1), &mut rng).unwrap();
            prop_assert!((r.norm_sqr() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn z_powers_commute_and_add(seed in any::<u64>(), a in 0u8..4, b in 0u8..4) {
            let base = random_state(seed, 2);
            let mut ab = base.clone();
            ab.apply_z_power(0, PhaseExponent::new(a)).unwrap();
            ab.apply_z_power(1, PhaseExponent::new(b)).unwrap();
            let mut ba = base.clone();
            ba.apply_z_power(1, PhaseExponent::new(b)).unwrap();
            ba.apply_z_power(0, PhaseExponent::new(a)).unwrap();
            prop_assert!((ab.overlap(&ba) - 1.0).abs() < 1e-12);

            let mut seq = base.clone();
            seq.apply_z_power(0, PhaseExponent::new(a)).unwrap();
            seq.apply_z_power(0, PhaseExponent::new(b)).unwrap();
            let mut sum = base.clone();
            sum.apply_z_power(0, PhaseExponent::new(a) + PhaseExponent::new(b)).unwrap();
            for (x, y) in seq.amplitudes().iter().zip(sum.amplitudes()) {
                prop_assert!((x - y).norm() < 1e-12);
            }
        }
    }
}
