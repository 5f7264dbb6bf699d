//! Two-party reading of a three-player line: the middle player's basis and
//! value bits act as an offset on the last player's measurement.

use crate::bits::Bits;
use crate::protocol::PlayerRecord;

/// `(b̂, v̂) = (b_bob ⊕ b_D, v_bob ⊕ v_D ⊕ (b_bob ∨ b_D))`.
pub fn apply_offset(b_bob: bool, b_d: bool, v_d: bool, v_bob: bool) -> (bool, bool) {
    (b_bob ^ b_d, v_bob ^ v_d ^ (b_bob | b_d))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QkdPrimeOffset {
    b_d: Bits,
    v_d: Bits,
}

impl QkdPrimeOffset {
    pub fn new(b_d: Bits, v_d: Bits) -> Result<Self, String> {
        if b_d.len() != v_d.len() {
            return Err(format!("offset lengths differ: {} vs {}", b_d.len(), v_d.len()));
        }
        Ok(QkdPrimeOffset { b_d, v_d })
    }

    pub fn len(&self) -> usize {
        self.b_d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b_d.is_empty()
    }

    /// Offsets Bob's basis and value strings round by round.
    pub fn apply(&self, b_bob: &Bits, v_bob: &Bits) -> Result<(Bits, Bits), String> {
        if b_bob.len() != self.len() || v_bob.len() != self.len() {
            return Err("Bob's strings do not match the offset length".into());
        }
        let (b, v): (Vec<bool>, Vec<bool>) = (0..self.len())
            .map(|n| apply_offset(b_bob.get(n), self.b_d.get(n), self.v_d.get(n), v_bob.get(n)))
            .unzip();
        Ok((Bits::from_bools(&b), Bits::from_bools(&v)))
    }
}

/// Alice/Bob statistics of a three-player session read as two-party key
/// distribution, with player 2 as the offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QkdPrimeView {
    pub b_hat: Bits,
    pub v_hat: Bits,
    /// Rounds where Alice's basis equals `b̂`.
    pub conclusive: Vec<usize>,
    /// Conclusive rounds where Alice's value differs from `v̂`.
    pub errors: Vec<usize>,
}

pub fn qkd_prime_view(records: &[PlayerRecord]) -> Result<QkdPrimeView, String> {
    let [alice, d, bob] = records else {
        return Err(format!("needs exactly three players, got {}", records.len()));
    };
    let offset = QkdPrimeOffset::new(d.b.clone(), d.v.clone())?;
    let (b_hat, v_hat) = offset.apply(&bob.b, &bob.v)?;
    let conclusive: Vec<usize> = (0..b_hat.len()).filter(|&n| alice.b.get(n) == b_hat.get(n)).collect();
    let errors = conclusive
        .iter()
        .copied()
        .filter(|&n| alice.v.get(n) != v_hat.get(n))
        .collect();
    Ok(QkdPrimeView {
        b_hat,
        v_hat,
        conclusive,
        errors,
    })
}
