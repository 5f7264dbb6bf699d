//! Decoding success of the default sparse code family at a fixed planted
//! error weight, over a range of syndrome overheads.
//!
//! Usage: code_scan [M] [p] [trials]

use qline::coding::{CodeConfig, LinearCode};
use qline::rng::{stream, Stream};
use qline::Bits;
use rand::seq::index;
use rayon::prelude::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let m: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(8192);
    let p: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.06);
    let trials: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(200);
    let weight = (p * m as f64).floor() as usize;
    for overhead in [0.2, 0.3, 0.4, 0.5, 0.6] {
        let cfg = CodeConfig { overhead, ..CodeConfig::default() };
        let code = LinearCode::for_error_rate(m, p, &cfg).expect("code");
        let ok = (0..trials)
            .into_par_iter()
            .filter(|&t| {
                let mut rng = stream(t, Stream::Adversary);
                let mut e = Bits::zeros(m);
                for i in index::sample(&mut rng, m, weight) {
                    e.set(i, true);
                }
                code.decode_error(&code.syndrome(&e).unwrap()).ok() == Some(e)
            })
            .count();
        println!(
            "overhead={overhead:.1} chi={} success={ok}/{trials}",
            code.syndrome_length()
        );
    }
}
