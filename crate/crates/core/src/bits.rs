//! Packed bit strings over GF(2).
//!
//! Every classical quantity the protocol moves around (basis bits, value
//! bits, syndromes, hash outputs, shares) is a [`Bits`]. Bit `i` lives in
//! word `i / 64` at position `i % 64`; bits past `len` are always zero.
//!
//! The text form is `<len>:<hex>`, where the hex digits encode bytes in
//! order and bit `i` sits at position `i % 8` of byte `i / 8`
//! (least-significant first). `5:0d` is the bit string `10110`.

use std::fmt;
use std::ops::{BitXor, BitXorAssign};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BitsParseError {
    #[error("missing `<len>:` prefix")]
    MissingLength,
    #[error("invalid length: {0}")]
    BadLength(String),
    #[error("invalid hex payload: {0}")]
    BadHex(String),
    #[error("hex payload holds {got} bytes, expected {expected}")]
    WrongByteCount { expected: usize, got: usize },
    #[error("nonzero padding bits past the declared length")]
    DirtyPadding,
}

#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bits {
    words: Vec<u64>,
    len: usize,
}

#[inline]
fn words_for(len: usize) -> usize {
    len.div_ceil(64)
}

impl Bits {
    pub fn zeros(len: usize) -> Self {
        Bits {
            words: vec![0; words_for(len)],
            len,
        }
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut words: Vec<u64> = (0..words_for(len)).map(|_| rng.gen()).collect();
        let tail = len % 64;
        if tail != 0 {
            if let Some(last) = words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
        Bits { words, len }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut out = Bits::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                out.words[i / 64] |= 1 << (i % 64);
            }
        }
        out
    }

    /// Parses a string of `0`/`1` characters, first character is bit 0.
    pub fn from_bit_str(s: &str) -> Option<Self> {
        let bools: Option<Vec<bool>> = s
            .chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect();
        bools.map(|b| Bits::from_bools(&b))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    pub fn push(&mut self, value: bool) {
        if self.len % 64 == 0 {
            self.words.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, value);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Parity of the bitwise AND, i.e. the GF(2) inner product.
    pub fn dot(&self, other: &Bits) -> bool {
        assert_eq!(self.len, other.len, "inner product of unequal lengths");
        let ones: u32 = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum();
        ones & 1 == 1
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            let mut rest = word;
            std::iter::from_fn(move || {
                if rest == 0 {
                    None
                } else {
                    let tz = rest.trailing_zeros() as usize;
                    rest &= rest - 1;
                    Some(w * 64 + tz)
                }
            })
        })
    }

    pub fn to_bools(&self) -> Vec<bool> {
        self.iter().collect()
    }

    /// Keeps the bits at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Bits {
        let mut out = Bits::zeros(indices.len());
        for (k, &i) in indices.iter().enumerate() {
            if self.get(i) {
                out.words[k / 64] |= 1 << (k % 64);
            }
        }
        out
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// 64 bits starting at bit `offset`, zero-filled past the end.
    #[inline]
    pub fn word_at(&self, offset: usize) -> u64 {
        let w = offset / 64;
        let sh = offset % 64;
        let lo = self.words.get(w).copied().unwrap_or(0);
        if sh == 0 {
            lo
        } else {
            let hi = self.words.get(w + 1).copied().unwrap_or(0);
            (lo >> sh) | (hi << (64 - sh))
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let nbytes = self.len.div_ceil(8);
        self.words
            .iter()
            .flat_map(|w| w.to_le_bytes())
            .take(nbytes)
            .collect()
    }

    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self, BitsParseError> {
        let expected = len.div_ceil(8);
        if bytes.len() != expected {
            return Err(BitsParseError::WrongByteCount {
                expected,
                got: bytes.len(),
            });
        }
        let mut out = Bits::zeros(len);
        for (i, chunk) in bytes.chunks(8).enumerate() {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            out.words[i] = u64::from_le_bytes(buf);
        }
        let tail = len % 64;
        if tail != 0 {
            let last = out.words.len() - 1;
            if out.words[last] >> tail != 0 {
                return Err(BitsParseError::DirtyPadding);
            }
        }
        Ok(out)
    }

    /// `<len>:<hex>` text form.
    pub fn to_hex(&self) -> String {
        format!("{}:{}", self.len, hex::encode(self.to_bytes()))
    }

    pub fn from_hex(s: &str) -> Result<Self, BitsParseError> {
        let (len, payload) = s.split_once(':').ok_or(BitsParseError::MissingLength)?;
        let len: usize = len
            .trim()
            .parse()
            .map_err(|_| BitsParseError::BadLength(len.to_string()))?;
        let bytes = hex::decode(payload.trim()).map_err(|e| BitsParseError::BadHex(e.to_string()))?;
        Bits::from_bytes(&bytes, len)
    }
}

impl BitXorAssign<&Bits> for Bits {
    fn bitxor_assign(&mut self, rhs: &Bits) {
        assert_eq!(self.len, rhs.len, "xor of unequal lengths");
        for (a, b) in self.words.iter_mut().zip(&rhs.words) {
            *a ^= b;
        }
    }
}

impl BitXor<&Bits> for &Bits {
    type Output = Bits;

    fn bitxor(self, rhs: &Bits) -> Bits {
        let mut out = self.clone();
        out ^= rhs;
        out
    }
}

impl FromIterator<bool> for Bits {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        let mut out = Bits::default();
        for b in iter {
            out.push(b);
        }
        out
    }
}

/// XOR of a collection of equal-length strings; `None` for an empty input.
pub fn xor_all<'a, I: IntoIterator<Item = &'a Bits>>(items: I) -> Option<Bits> {
    let mut iter = items.into_iter();
    let mut acc = iter.next()?.clone();
    for b in iter {
        acc ^= b;
    }
    Some(acc)
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len <= 128 {
            let s: String = self.iter().map(|b| if b { '1' } else { '0' }).collect();
            write!(f, "Bits({s})")
        } else {
            write!(f, "Bits({})", self.to_hex())
        }
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for Bits {
    type Err = BitsParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Bits::from_hex(s)
    }
}

impl Serialize for Bits {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Bits {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Bits::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn hex_layout_is_lsb_first() {
        let b = Bits::from_bit_str("10110").unwrap();
        assert_eq!(b.to_hex(), "5:0d");
        assert_eq!(Bits::from_hex("5:0d").unwrap(), b);
        assert_eq!(Bits::zeros(0).to_hex(), "0:");
    }

    #[test]
    fn rejects_malformed_hex() {
        assert_eq!(Bits::from_hex("0d"), Err(BitsParseError::MissingLength));
        assert!(matches!(Bits::from_hex("9:0d"), Err(BitsParseError::WrongByteCount { .. })));
        assert_eq!(Bits::from_hex("3:0d"), Err(BitsParseError::DirtyPadding));
        assert!(matches!(Bits::from_hex("5:zz"), Err(BitsParseError::BadHex(_))));
    }

    #[test]
    fn word_at_straddles_boundaries() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let b = Bits::random(200, &mut rng);
        for offset in [0, 1, 63, 64, 65, 130, 180] {
            let w = b.word_at(offset);
            for k in 0..64 {
                let expected = offset + k < 200 && b.get(offset + k);
                assert_eq!((w >> k) & 1 == 1, expected, "offset {offset} bit {k}");
            }
        }
    }

    #[test]
    fn ones_and_select() {
        let b = Bits::from_bit_str("0100100001").unwrap();
        assert_eq!(b.ones().collect::<Vec<_>>(), vec![1, 4, 9]);
        assert_eq!(b.select(&[9, 0, 4]), Bits::from_bit_str("101").unwrap());
        assert_eq!(b.count_ones(), 3);
    }

    proptest! {
        #[test]
        fn hex_round_trip(bools in proptest::collection::vec(any::<bool>(), 0..300)) {
            let b = Bits::from_bools(&bools);
            prop_assert_eq!(Bits::from_hex(&b.to_hex()).unwrap(), b.clone());
            prop_assert_eq!(b.to_bools(), bools);
        }

        #[test]
        fn xor_is_self_inverse(seed in any::<u64>(), len in 0usize..500) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let a = Bits::random(len, &mut rng);
            let c = Bits::random(len, &mut rng);
            let mut x = &a ^ &c;
            x ^= &c;
            prop_assert_eq!(x, a);
        }
    }
}
