//! Toeplitz hashing over GF(2).
//!
//! A `k × M` Toeplitz matrix is fixed by `M + k − 1` seed bits. Row `i`,
//! column `c` holds seed bit `s[(k − 1) + c − i]`, so row `i` is the seed
//! window starting at offset `k − 1 − i`.

use std::fmt;
use std::str::FromStr;

use super::CodeError;
use crate::bits::Bits;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToeplitzHash {
    input_len: usize,
    output_len: usize,
    seed: Bits,
}

/// Seed length for an `output_len × input_len` matrix.
pub fn seed_len(input_len: usize, output_len: usize) -> usize {
    if input_len == 0 || output_len == 0 {
        0
    } else {
        input_len + output_len - 1
    }
}

impl ToeplitzHash {
    pub fn new(input_len: usize, output_len: usize, seed: Bits) -> Result<Self, CodeError> {
        let expected = seed_len(input_len, output_len);
        if seed.len() != expected {
            return Err(CodeError::LengthMismatch {
                expected,
                got: seed.len(),
            });
        }
        Ok(ToeplitzHash {
            input_len,
            output_len,
            seed,
        })
    }

    /// Builds the hash from shared coin-flip output. Every holder of the same
    /// coins gets the same function.
    pub fn sample(input_len: usize, output_len: usize, coins: &Bits) -> Result<Self, CodeError> {
        Self::new(input_len, output_len, coins.clone())
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn output_len(&self) -> usize {
        self.output_len
    }

    pub fn seed(&self) -> &Bits {
        &self.seed
    }

    /// Matrix entry at row `i`, column `c`.
    pub fn entry(&self, i: usize, c: usize) -> bool {
        self.seed.get(self.output_len - 1 + c - i)
    }

    pub fn eval(&self, input: &Bits) -> Result<Bits, CodeError> {
        if input.len() != self.input_len {
            return Err(CodeError::LengthMismatch {
                expected: self.input_len,
                got: input.len(),
            });
        }
        let mut out = Bits::zeros(self.output_len);
        for i in 0..self.output_len {
            let base = self.output_len - 1 - i;
            let mut acc = 0u64;
            for (w, &word) in input.words().iter().enumerate() {
                acc ^= self.seed.word_at(base + 64 * w) & word;
            }
            if acc.count_ones() & 1 == 1 {
                out.set(i, true);
            }
        }
        Ok(out)
    }
}

impl fmt::Display for ToeplitzHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "toeplitz {} {} {}", self.input_len, self.output_len, self.seed.to_hex())
    }
}

impl FromStr for ToeplitzHash {
    type Err = CodeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CodeError::Parse(format!("bad hash record `{s}`"));
        let mut parts = s.split_whitespace();
        if parts.next() != Some("toeplitz") {
            return Err(bad());
        }
        let m = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let k = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let seed = parts.next().and_then(|p| Bits::from_hex(p).ok()).ok_or_else(bad)?;
        if parts.next().is_some() {
            return Err(bad());
        }
        ToeplitzHash::new(m, k, seed)
    }
}
