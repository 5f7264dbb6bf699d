//! Exhaustive syndrome tables for short codes.

use rand::Rng;

use crate::rng::SimRng;

pub const MAX_BLOCK: usize = 24;
pub const MAX_SYNDROME: usize = 20;

const EMPTY: u32 = u32::MAX;

/// Minimum-weight coset leader for every reachable syndrome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyndromeTable {
    leaders: Vec<u32>,
    radius: usize,
}

/// Column `i` of the parity-check matrix packed into the low `chi` bits.
pub fn column_masks(rows: &[Vec<u32>], m: usize) -> Vec<u32> {
    let mut cols = vec![0u32; m];
    for (r, row) in rows.iter().enumerate() {
        for &c in row {
            cols[c as usize] |= 1 << r;
        }
    }
    cols
}

fn syndrome_of(cols: &[u32], pattern: u32) -> u32 {
    let mut s = 0;
    let mut p = pattern;
    while p != 0 {
        s ^= cols[p.trailing_zeros() as usize];
        p &= p - 1;
    }
    s
}

/// Calls `f` on every `m`-bit mask of weight `w` in increasing order; stops
/// early when `f` returns false.
fn for_each_of_weight(m: usize, w: usize, mut f: impl FnMut(u32) -> bool) {
    if w > m {
        return;
    }
    if w == 0 {
        f(0);
        return;
    }
    let limit = 1u64 << m;
    let mut x: u64 = (1u64 << w) - 1;
    while x < limit {
        if !f(x as u32) {
            return;
        }
        // next mask with the same popcount
        let c = x & x.wrapping_neg();
        let r = x + c;
        x = (((r ^ x) >> 2) / c) | r;
    }
}

/// Largest `t` such that all patterns of weight at most `t` have distinct
/// syndromes.
pub fn unique_radius(cols: &[u32], chi: usize) -> usize {
    let m = cols.len();
    let mut seen = vec![false; 1 << chi];
    for w in 0..=m {
        let mut clash = false;
        for_each_of_weight(m, w, |p| {
            let s = syndrome_of(cols, p) as usize;
            if seen[s] {
                clash = true;
                return false;
            }
            seen[s] = true;
            true
        });
        if clash {
            return w.saturating_sub(1);
        }
    }
    m
}

impl SyndromeTable {
    pub fn build(cols: &[u32], chi: usize) -> Self {
        let m = cols.len();
        let mut leaders = vec![EMPTY; 1 << chi];
        let mut filled = 0usize;
        for w in 0..=m {
            for_each_of_weight(m, w, |p| {
                let s = syndrome_of(cols, p) as usize;
                if leaders[s] == EMPTY {
                    leaders[s] = p;
                    filled += 1;
                }
                filled < leaders.len()
            });
            if filled == leaders.len() {
                break;
            }
        }
        SyndromeTable {
            leaders,
            radius: unique_radius(cols, chi),
        }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn leader(&self, syndrome: u32) -> Option<u32> {
        self.leaders
            .get(syndrome as usize)
            .copied()
            .filter(|&p| p != EMPTY)
    }
}

/// Random `chi × m` parity-check rows; the best of several draws by unique
/// decoding radius.
pub fn random_rows(m: usize, chi: usize, rng: &mut SimRng) -> Vec<Vec<u32>> {
    const CANDIDATES: usize = 16;
    let mut best: Option<(usize, Vec<Vec<u32>>)> = None;
    for _ in 0..CANDIDATES {
        let rows: Vec<Vec<u32>> = (0..chi)
            .map(|_| (0..m as u32).filter(|_| rng.gen::<bool>()).collect())
            .collect();
        let t = unique_radius(&column_masks(&rows, m), chi);
        if best.as_ref().map_or(true, |(bt, _)| t > *bt) {
            best = Some((t, rows));
        }
    }
    best.map(|(_, rows)| rows).unwrap_or_default()
}
