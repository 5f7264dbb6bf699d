//! Syndrome-decoding linear codes and Toeplitz hashing.
//!
//! Two code families are provided: exhaustive syndrome tables for blocks of
//! at most 24 bits, and sparse parity-check codes with an iterative decoder
//! for everything larger. Both decode an error pattern from its syndrome
//! alone, which is all the reconciliation step needs.

mod sparse;
mod table;
pub mod toeplitz;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;
use crate::rng::{stream, Stream};
use crate::security::binary_entropy;

pub use sparse::construct_rows as construct_sparse_rows;
pub use toeplitz::ToeplitzHash;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CodeError {
    #[error("length mismatch: expected {expected} bits, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("syndrome length {chi} exceeds block length {m}")]
    SyndromeTooLong { chi: usize, m: usize },
    #[error("design error rate {0} outside [0, 1/2)")]
    BadRate(f64),
    #[error("table code limited to {max_block} bits and {max_syndrome} syndrome bits")]
    TableTooLarge { max_block: usize, max_syndrome: usize },
    #[error("column index {col} outside block of {m} bits")]
    BadColumn { col: u32, m: usize },
    #[error("decoder found no error pattern for the syndrome")]
    DecodeFailure,
    #[error("{0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decoder {
    Table,
    BeliefPropagation,
    BitFlipping,
}

impl Decoder {
    fn as_str(self) -> &'static str {
        match self {
            Decoder::Table => "table",
            Decoder::BeliefPropagation => "bp",
            Decoder::BitFlipping => "bit-flip",
        }
    }
}

impl FromStr for Decoder {
    type Err = CodeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(Decoder::Table),
            "bp" | "belief-propagation" => Ok(Decoder::BeliefPropagation),
            "bit-flip" | "bit-flipping" => Ok(Decoder::BitFlipping),
            _ => Err(CodeError::Parse(format!("unknown decoder `{s}`"))),
        }
    }
}

/// Decoder for sparse codes; short blocks always use a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SparseDecoder {
    #[default]
    BeliefPropagation,
    BitFlipping,
}

/// How the reconciliation code is built from the estimated error rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodeConfig {
    /// Syndrome length is `ceil(M · h(p) · (1 + overhead))`.
    pub overhead: f64,
    pub column_weight: usize,
    pub max_iter: usize,
    pub decoder: SparseDecoder,
    pub seed: u64,
}

pub const DEFAULT_OVERHEAD: f64 = 0.5;

impl Default for CodeConfig {
    fn default() -> Self {
        CodeConfig {
            overhead: DEFAULT_OVERHEAD,
            column_weight: 3,
            max_iter: 100,
            decoder: SparseDecoder::BeliefPropagation,
            seed: 0,
        }
    }
}

/// Syndrome length for a block of `m` bits at design error rate `p`.
pub fn syndrome_length(m: usize, p: f64, overhead: f64) -> Result<usize, CodeError> {
    if !(0.0..0.5).contains(&p) {
        return Err(CodeError::BadRate(p));
    }
    if p == 0.0 {
        return Ok(0);
    }
    let h = binary_entropy(p).map_err(|_| CodeError::BadRate(p))?;
    Ok((m as f64 * h * (1.0 + overhead)).ceil() as usize)
}

#[derive(Debug, Clone)]
enum Engine {
    Table(table::SyndromeTable),
    Graph(sparse::Graph),
}

#[derive(Debug, Clone)]
pub struct LinearCode {
    block_length: usize,
    rows: Vec<Vec<u32>>,
    correction_rate: f64,
    decoder: Decoder,
    max_iter: usize,
    engine: Engine,
}

impl PartialEq for LinearCode {
    fn eq(&self, other: &Self) -> bool {
        self.block_length == other.block_length
            && self.rows == other.rows
            && self.correction_rate == other.correction_rate
            && self.decoder == other.decoder
            && self.max_iter == other.max_iter
    }
}

impl LinearCode {
    /// Builds the code used to reconcile `m`-bit strings whose error rate
    /// is expected to stay below `p`. Deterministic in `(m, p, config)`.
    pub fn for_error_rate(m: usize, p: f64, config: &CodeConfig) -> Result<Self, CodeError> {
        let chi = syndrome_length(m, p, config.overhead)?;
        if chi > m {
            return Err(CodeError::SyndromeTooLong { chi, m });
        }
        if m <= table::MAX_BLOCK && chi <= table::MAX_SYNDROME {
            return Self::table(m, chi, config.seed);
        }
        let decoder = match config.decoder {
            SparseDecoder::BeliefPropagation => Decoder::BeliefPropagation,
            SparseDecoder::BitFlipping => Decoder::BitFlipping,
        };
        Self::sparse(m, chi, config.column_weight, p, decoder, config.max_iter, config.seed)
    }

    /// Random short code with an exhaustive syndrome table. The correction
    /// rate is the unique-decoding radius over `m`.
    pub fn table(m: usize, chi: usize, seed: u64) -> Result<Self, CodeError> {
        if m > table::MAX_BLOCK || chi > table::MAX_SYNDROME {
            return Err(CodeError::TableTooLarge {
                max_block: table::MAX_BLOCK,
                max_syndrome: table::MAX_SYNDROME,
            });
        }
        if chi > m {
            return Err(CodeError::SyndromeTooLong { chi, m });
        }
        let mut rng = code_rng(seed, m, chi);
        let rows = table::random_rows(m, chi, &mut rng);
        Self::from_rows(m, rows, None, Decoder::Table, 0)
    }

    pub fn sparse(
        m: usize,
        chi: usize,
        column_weight: usize,
        design_rate: f64,
        decoder: Decoder,
        max_iter: usize,
        seed: u64,
    ) -> Result<Self, CodeError> {
        if chi > m {
            return Err(CodeError::SyndromeTooLong { chi, m });
        }
        let mut rng = code_rng(seed, m, chi);
        let rows = sparse::construct_rows(m, chi, column_weight, &mut rng);
        Self::from_rows(m, rows, Some(design_rate), decoder, max_iter)
    }

    /// Assembles a code from explicit parity-check rows (column indices).
    /// Table codes derive their correction rate; iterative ones take it.
    pub fn from_rows(
        m: usize,
        rows: Vec<Vec<u32>>,
        correction_rate: Option<f64>,
        decoder: Decoder,
        max_iter: usize,
    ) -> Result<Self, CodeError> {
        for row in &rows {
            if let Some(&col) = row.iter().find(|&&c| c as usize >= m) {
                return Err(CodeError::BadColumn { col, m });
            }
        }
        let chi = rows.len();
        let (engine, rate) = match decoder {
            Decoder::Table => {
                if m > table::MAX_BLOCK || chi > table::MAX_SYNDROME {
                    return Err(CodeError::TableTooLarge {
                        max_block: table::MAX_BLOCK,
                        max_syndrome: table::MAX_SYNDROME,
                    });
                }
                let t = table::SyndromeTable::build(&table::column_masks(&rows, m), chi);
                let rate = if m == 0 { 0.0 } else { t.radius() as f64 / m as f64 };
                (Engine::Table(t), rate)
            }
            _ => {
                let rate = correction_rate.unwrap_or(0.0);
                if !(0.0..0.5).contains(&rate) {
                    return Err(CodeError::BadRate(rate));
                }
                (Engine::Graph(sparse::Graph::new(m, &rows)), rate)
            }
        };
        Ok(LinearCode {
            block_length: m,
            rows,
            correction_rate: rate,
            decoder,
            max_iter,
            engine,
        })
    }

    pub fn block_length(&self) -> usize {
        self.block_length
    }

    pub fn syndrome_length(&self) -> usize {
        self.rows.len()
    }

    pub fn correction_rate(&self) -> f64 {
        self.correction_rate
    }

    pub fn decoder(&self) -> Decoder {
        self.decoder
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    /// Column `i` of the parity-check matrix.
    pub fn column(&self, i: usize) -> Bits {
        self.rows.iter().map(|r| r.contains(&(i as u32))).collect()
    }

    pub fn syndrome(&self, word: &Bits) -> Result<Bits, CodeError> {
        if word.len() != self.block_length {
            return Err(CodeError::LengthMismatch {
                expected: self.block_length,
                got: word.len(),
            });
        }
        Ok(self
            .rows
            .iter()
            .map(|row| row.iter().fold(false, |acc, &c| acc ^ word.get(c as usize)))
            .collect())
    }

    /// Finds a low-weight error pattern with the given syndrome.
    pub fn decode_error(&self, target: &Bits) -> Result<Bits, CodeError> {
        if target.len() != self.rows.len() {
            return Err(CodeError::LengthMismatch {
                expected: self.rows.len(),
                got: target.len(),
            });
        }
        match &self.engine {
            Engine::Table(t) => {
                let s = target.iter().enumerate().fold(0u32, |acc, (i, b)| acc | (u32::from(b) << i));
                let p = t.leader(s).ok_or(CodeError::DecodeFailure)?;
                Ok((0..self.block_length).map(|i| (p >> i) & 1 == 1).collect())
            }
            Engine::Graph(g) => {
                let found = match self.decoder {
                    Decoder::BitFlipping => g.bit_flipping(target, self.max_iter),
                    _ => g.belief_propagation(target, self.correction_rate, self.max_iter),
                };
                found.ok_or(CodeError::DecodeFailure)
            }
        }
    }

    /// Text form: a header line, then one line per parity row listing its
    /// column indices in hex.
    pub fn to_text(&self) -> String {
        self.to_string()
    }

    pub fn from_text(text: &str) -> Result<Self, CodeError> {
        text.parse()
    }
}

fn code_rng(seed: u64, m: usize, chi: usize) -> crate::rng::SimRng {
    let key = seed ^ (m as u64).rotate_left(32) ^ (chi as u64).rotate_left(48);
    stream(key, Stream::Application)
}

const HEADER: &str = "qline-code v1";

impl fmt::Display for LinearCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{HEADER} m={} chi={} rate={} decoder={} max-iter={}",
            self.block_length,
            self.rows.len(),
            self.correction_rate,
            self.decoder.as_str(),
            self.max_iter
        )?;
        for row in &self.rows {
            let cols: Vec<String> = row.iter().map(|c| format!("{c:x}")).collect();
            writeln!(f, "{}", cols.join(" "))?;
        }
        Ok(())
    }
}

impl FromStr for LinearCode {
    type Err = CodeError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let parse_err = |msg: String| CodeError::Parse(msg);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| parse_err("empty code file".into()))?;
        let fields = header
            .strip_prefix(HEADER)
            .ok_or_else(|| parse_err(format!("bad header `{header}`")))?;
        let (mut m, mut chi, mut rate, mut decoder, mut max_iter) = (None, None, None, None, None);
        for field in fields.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| parse_err(format!("bad header field `{field}`")))?;
            let bad = || parse_err(format!("bad value for `{key}`"));
            match key {
                "m" => m = Some(value.parse::<usize>().map_err(|_| bad())?),
                "chi" => chi = Some(value.parse::<usize>().map_err(|_| bad())?),
                "rate" => rate = Some(value.parse::<f64>().map_err(|_| bad())?),
                "decoder" => decoder = Some(value.parse::<Decoder>()?),
                "max-iter" => max_iter = Some(value.parse::<usize>().map_err(|_| bad())?),
                _ => return Err(parse_err(format!("unknown header field `{key}`"))),
            }
        }
        let missing = |k: &str| parse_err(format!("header lacks `{k}`"));
        let m = m.ok_or_else(|| missing("m"))?;
        let chi = chi.ok_or_else(|| missing("chi"))?;
        let decoder = decoder.ok_or_else(|| missing("decoder"))?;
        let mut rows = Vec::with_capacity(chi);
        for line in lines.by_ref().take(chi) {
            let row = line
                .split_whitespace()
                .map(|c| u32::from_str_radix(c, 16))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| parse_err(format!("bad row `{line}`")))?;
            rows.push(row);
        }
        if rows.len() != chi {
            return Err(parse_err(format!("expected {chi} rows, found {}", rows.len())));
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(parse_err("trailing data after rows".into()));
        }
        let code = LinearCode::from_rows(m, rows, rate, decoder, max_iter.unwrap_or(0))?;
        if let Some(r) = rate {
            if code.correction_rate != r {
                return Err(parse_err(format!("rate {r} does not match the table radius")));
            }
        }
        Ok(code)
    }
}
