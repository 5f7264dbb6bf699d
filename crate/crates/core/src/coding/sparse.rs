//! Sparse parity-check codes with fixed column weight, decoded from the
//! syndrome alone by belief propagation or bit flipping.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::bits::Bits;
use crate::rng::SimRng;

/// Parity-check rows with every column touching `column_weight` rows and row
/// degrees kept as even as possible. Row pairs sharing a column are avoided
/// where the degree budget allows, so short cycles are rare.
pub fn construct_rows(m: usize, chi: usize, column_weight: usize, rng: &mut SimRng) -> Vec<Vec<u32>> {
    let wc = column_weight.min(chi);
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); chi];
    if chi == 0 {
        return rows;
    }
    // rows bucketed by current degree; pos[r] is r's slot in its bucket
    let mut buckets: Vec<Vec<u32>> = vec![(0..chi as u32).collect()];
    let mut pos: Vec<usize> = (0..chi).collect();
    let mut min_degree = 0usize;

    let mut order: Vec<u32> = (0..m as u32).collect();
    order.shuffle(rng);

    let mut chosen: Vec<u32> = Vec::with_capacity(wc);
    for &col in &order {
        chosen.clear();
        for _ in 0..wc {
            let pick = pick_row(&buckets, min_degree, &rows, &chosen, true, rng)
                .or_else(|| pick_row(&buckets, min_degree, &rows, &chosen, false, rng))
                .expect("column weight never exceeds the row count");
            chosen.push(pick);
        }
        for &r in &chosen {
            let r = r as usize;
            let d = rows[r].len();
            // move r from bucket d to bucket d + 1
            let bucket = &mut buckets[d];
            let last = *bucket.last().expect("row is in its bucket");
            bucket.swap_remove(pos[r]);
            if last as usize != r {
                pos[last as usize] = pos[r];
            }
            if buckets.len() <= d + 1 {
                buckets.push(Vec::new());
            }
            pos[r] = buckets[d + 1].len();
            buckets[d + 1].push(r as u32);
            rows[r].push(col);
        }
        while buckets[min_degree].is_empty() {
            min_degree += 1;
        }
    }
    for row in &mut rows {
        row.sort_unstable();
    }
    rows
}

fn shares_column(a: &[u32], b: &[u32]) -> bool {
    a.iter().any(|x| b.contains(x))
}

fn pick_row(
    buckets: &[Vec<u32>],
    min_degree: usize,
    rows: &[Vec<u32>],
    chosen: &[u32],
    avoid_cycles: bool,
    rng: &mut SimRng,
) -> Option<u32> {
    const PROBES: usize = 24;
    let ok = |r: u32| {
        !chosen.contains(&r)
            && (!avoid_cycles || chosen.iter().all(|&c| !shares_column(&rows[r as usize], &rows[c as usize])))
    };
    // stay within two degrees of the minimum to keep rows balanced
    for bucket in buckets.iter().skip(min_degree).take(2) {
        if bucket.is_empty() {
            continue;
        }
        for _ in 0..PROBES.min(bucket.len()) {
            let r = bucket[rng.gen_range(0..bucket.len())];
            if ok(r) {
                return Some(r);
            }
        }
        if bucket.len() <= 4 * PROBES {
            if let Some(&r) = bucket.iter().find(|&&r| ok(r)) {
                return Some(r);
            }
        }
    }
    if avoid_cycles {
        return None;
    }
    buckets.iter().skip(min_degree).flatten().copied().find(|&r| ok(r))
}

/// Edge layout shared by the iterative decoders.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    /// `check_start[c]..check_start[c + 1]` are the edges of check `c`.
    check_start: Vec<usize>,
    edge_var: Vec<u32>,
    /// Edge ids incident to each variable.
    var_edges: Vec<Vec<u32>>,
}

impl Graph {
    pub fn new(m: usize, rows: &[Vec<u32>]) -> Self {
        let mut check_start = Vec::with_capacity(rows.len() + 1);
        let mut edge_var = Vec::new();
        let mut var_edges = vec![Vec::new(); m];
        check_start.push(0);
        for row in rows {
            for &v in row {
                var_edges[v as usize].push(edge_var.len() as u32);
                edge_var.push(v);
            }
            check_start.push(edge_var.len());
        }
        Graph {
            check_start,
            edge_var,
            var_edges,
        }
    }

    fn checks(&self) -> usize {
        self.check_start.len() - 1
    }

    fn syndrome_matches(&self, word: &[bool], target: &Bits) -> bool {
        (0..self.checks()).all(|c| {
            let parity = self.check_start[c]..self.check_start[c + 1];
            parity.fold(false, |acc, e| acc ^ word[self.edge_var[e] as usize]) == target.get(c)
        })
    }

    /// Sum-product decoding in the log-likelihood domain with prior flip
    /// probability `p`. Returns the error estimate once its syndrome matches.
    pub fn belief_propagation(&self, target: &Bits, p: f64, max_iter: usize) -> Option<Bits> {
        let m = self.var_edges.len();
        let p = p.clamp(1e-6, 0.5 - 1e-6);
        let prior = ((1.0 - p) / p).ln();
        let edges = self.edge_var.len();
        let mut to_check = vec![prior; edges];
        let mut to_var = vec![0.0f64; edges];
        let mut hard = vec![false; m];
        if self.syndrome_matches(&hard, target) {
            return Some(Bits::zeros(m));
        }
        let mut tanhs: Vec<f64> = Vec::new();
        let mut suffix: Vec<f64> = Vec::new();
        const LIMIT: f64 = 1.0 - 1e-15;
        for _ in 0..max_iter {
            for c in 0..self.checks() {
                let range = self.check_start[c]..self.check_start[c + 1];
                let sign = if target.get(c) { -1.0 } else { 1.0 };
                tanhs.clear();
                tanhs.extend(range.clone().map(|e| (0.5 * to_check[e]).tanh()));
                suffix.clear();
                suffix.resize(tanhs.len() + 1, 1.0);
                for i in (0..tanhs.len()).rev() {
                    suffix[i] = suffix[i + 1] * tanhs[i];
                }
                let mut prefix = 1.0;
                for (i, e) in range.enumerate() {
                    let t = (prefix * suffix[i + 1]).clamp(-LIMIT, LIMIT);
                    to_var[e] = sign * 2.0 * t.atanh();
                    prefix *= tanhs[i];
                }
            }
            for (v, incident) in self.var_edges.iter().enumerate() {
                let total = prior + incident.iter().map(|&e| to_var[e as usize]).sum::<f64>();
                for &e in incident {
                    to_check[e as usize] = total - to_var[e as usize];
                }
                hard[v] = total < 0.0;
            }
            if self.syndrome_matches(&hard, target) {
                return Some(Bits::from_bools(&hard));
            }
        }
        None
    }

    /// Gallager-style bit flipping: each pass flips the bits with the most
    /// unsatisfied checks.
    pub fn bit_flipping(&self, target: &Bits, max_iter: usize) -> Option<Bits> {
        let m = self.var_edges.len();
        let mut word = vec![false; m];
        let mut unsatisfied: Vec<bool> = (0..self.checks()).map(|c| target.get(c)).collect();
        let edge_check: Vec<usize> = (0..self.checks())
            .flat_map(|c| (self.check_start[c]..self.check_start[c + 1]).map(move |_| c))
            .collect();
        for _ in 0..max_iter {
            if !unsatisfied.iter().any(|&u| u) {
                return Some(Bits::from_bools(&word));
            }
            let counts: Vec<usize> = self
                .var_edges
                .iter()
                .map(|es| es.iter().filter(|&&e| unsatisfied[edge_check[e as usize]]).count())
                .collect();
            let max = counts.iter().copied().max().unwrap_or(0);
            if max == 0 {
                return None;
            }
            let flips: Vec<usize> = (0..m).filter(|&v| counts[v] == max).collect();
            for v in flips {
                word[v] = !word[v];
                for &e in &self.var_edges[v] {
                    let c = edge_check[e as usize];
                    unsatisfied[c] = !unsatisfied[c];
                }
            }
        }
        if unsatisfied.iter().any(|&u| u) {
            None
        } else {
            Some(Bits::from_bools(&word))
        }
    }
}
