//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N PASS|FAIL: ...` line straight to stderr so it shows up even
//! when libtest captures output.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use qline::adversary::{apply_offset, AttackSpec, InterceptPolicy, LinkAttack};
use qline::applications::{anonymous_veto, establish_key, reconstruct, share_message, ShareSet};
use qline::channel::{Channel, Stage};
use qline::coding::{CodeConfig, LinearCode, ToeplitzHash};
use qline::protocol::{
    correctness_passes, run_distribution, run_session, AbortStage, KeyLength, ProtocolParams, SessionOutcome,
    SessionRngs, Variant,
};
use qline::quantum::{MeasurementBasis, PhaseExponent, QuantumRegister};
use qline::rng::{derive_run_seed, stream, Stream};
use qline::security::{abort_bound, solve_round_count, BoundInputs, RoundCountInputs};
use qline::Bits;
use rand::seq::index::sample;
use rayon::prelude::*;

fn report(n: u32, pass: bool, detail: String) {
    let line = format!("criterion {n} {}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    assert!(pass, "criterion {n} failed: {detail}");
}

fn sessions(params: &ProtocolParams, attack: &AttackSpec, master: u64, count: u64) -> Vec<SessionOutcome> {
    (0..count)
        .into_par_iter()
        .map(|i| run_session(params, Variant::PrepareMeasure, attack, derive_run_seed(master, i)).unwrap())
        .collect()
}

/// Upper edge of a binomial rate: `p + 3σ` over `n` trials.
fn plus_three_sigma(p: f64, n: usize) -> f64 {
    p + 3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

#[test]
fn criterion_01_shares_xor_to_zero() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut total = 0;
    for players in 2..=5 {
        let params = ProtocolParams { eta: 32, mu: 0.0, ..ProtocolParams::new(players, 4096) };
        for out in sessions(&params, &AttackSpec::none(), 100 + players as u64, 200) {
            total += 1;
            let ok = out
                .shares
                .as_ref()
                .map(|s| s.values().fold(Bits::zeros(params.rounds / 8), |acc, x| &acc ^ x).is_zero())
                .unwrap_or(false);
            if !ok {
                failures.push((players, out.stats.abort));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        failures.is_empty() && secs < 60.0,
        format!("{total} sessions over J=2..5, {} failures, {secs:.1}s", failures.len()),
    );
}

#[test]
fn criterion_02_correctness_hash_calibration() {
    // The adversary fixes the residual error pattern, then the hash is drawn
    // by coin flip, as in the protocol.
    let eta = 8;
    let m = 1024;
    let trials = 100_000usize;
    let mut rng = stream(2, Stream::Adversary);
    let mut channel = Channel::new(3, stream(2, Stream::Channel));
    let mut passes = 0;
    for t in 0..trials {
        let residual = match t % 4 {
            0 => {
                let mut r = Bits::zeros(m);
                r.set(t % m, true);
                r
            }
            1 => (0..m).map(|i| (t % (m - 8)..t % (m - 8) + 8).contains(&i)).collect(),
            2 => {
                let mut r = Bits::zeros(m);
                for i in sample(&mut rng, m, 61).iter() {
                    r.set(i, true);
                }
                r
            }
            _ => {
                let mut r = Bits::random(m, &mut rng);
                r.set(0, true);
                r
            }
        };
        let v1 = Bits::random(m, &mut rng);
        let v2 = Bits::random(m, &mut rng);
        let v3 = &(&(&v1 ^ &v2) ^ &residual) ^ &Bits::zeros(m);
        if channel.transcript().len() > 10_000 {
            channel = Channel::new(3, stream(2 + t as u64, Stream::Channel));
        }
        let coins = channel.coin_flip_bits(m + eta - 1, Stage::CorrectnessSeed).unwrap();
        let hash = ToeplitzHash::sample(m, eta, &coins).unwrap();
        if correctness_passes(&hash, &[v1, v2, v3]).unwrap() {
            passes += 1;
        }
    }
    let p = 2f64.powi(-(eta as i32));
    let bound = plus_three_sigma(p, trials);
    let rate = passes as f64 / trials as f64;
    report(
        2,
        rate <= bound,
        format!("false-pass rate {rate:.6} over {trials} checks, bound 2^-8+3σ = {bound:.6}"),
    );
}

/// Exact joint probability of every `(b⃗, v⃗)` in one prepare-and-measure round.
fn pm_exact(players: usize) -> BTreeMap<(u32, u32), f64> {
    let mut table = BTreeMap::new();
    let middle_bits = players - 1;
    for bases in 0..1u32 << players {
        for values in 0..1u32 << middle_bits {
            let x = |j: usize| PhaseExponent::from_bits(bases >> j & 1 == 1, values >> j & 1 == 1);
            let mut reg = QuantumRegister::prepare_initial(x(0));
            for j in 1..middle_bits {
                reg.apply_z_power(0, x(j)).unwrap();
            }
            let basis = MeasurementBasis::from_bit(bases >> (players - 1) & 1 == 1);
            for outcome in [false, true] {
                let p = reg.outcome_probability(0, basis, outcome).unwrap();
                let all = values | u32::from(outcome) << (players - 1);
                let prior = 0.5f64.powi((players + middle_bits) as i32);
                *table.entry((bases, all)).or_insert(0.0) += prior * p;
            }
        }
    }
    table
}

/// Same table for the entangled variant: Bell pair, CNOT chain, everybody
/// measures, with probabilities from successive projections.
fn eb_exact(players: usize) -> BTreeMap<(u32, u32), f64> {
    let mut table = BTreeMap::new();
    for bases in 0..1u32 << players {
        let mut reg = QuantumRegister::bell_pair();
        let mut held = vec![0];
        for _ in 1..players - 1 {
            let fresh = reg.push_zero().unwrap();
            reg.apply_cnot(1, fresh).unwrap();
            held.push(fresh);
        }
        held.push(1);
        for values in 0..1u32 << players {
            let mut r = reg.clone();
            let mut p = 0.5f64.powi(players as i32);
            for (j, &q) in held.iter().enumerate() {
                let basis = MeasurementBasis::from_bit(bases >> j & 1 == 1);
                let outcome = values >> j & 1 == 1;
                let po = r.outcome_probability(q, basis, outcome).unwrap();
                p *= po;
                if po == 0.0 {
                    break;
                }
                r.project(q, basis, outcome).unwrap();
            }
            *table.entry((bases, values)).or_insert(0.0) += p;
        }
    }
    table
}

/// The closed form both variants should produce: uniform bases and leading
/// values, and a last value fixed on conclusive rounds and uniform otherwise.
fn closed_form(players: usize, bases: u32, values: u32) -> f64 {
    let prior = 0.5f64.powi((2 * players - 1) as i32);
    if bases.count_ones() % 2 == 1 {
        return prior * 0.5;
    }
    let lead = values & ((1 << (players - 1)) - 1);
    let expected = (lead.count_ones() % 2 == 1) ^ ((bases.count_ones() % 4) / 2 == 1);
    if (values >> (players - 1) & 1 == 1) == expected {
        prior
    } else {
        0.0
    }
}

fn tv(a: &BTreeMap<(u32, u32), f64>, b: &BTreeMap<(u32, u32), f64>) -> f64 {
    let keys: std::collections::BTreeSet<_> = a.keys().chain(b.keys()).collect();
    0.5 * keys
        .into_iter()
        .map(|k| (a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

fn empirical_round_table(variant: Variant, players: usize, rounds: usize, samples: u64) -> Vec<u64> {
    let params = ProtocolParams::new(players, rounds);
    (0..samples)
        .into_par_iter()
        .fold(
            || vec![0u64; 1 << (2 * players)],
            |mut acc, s| {
                let mut rngs = SessionRngs::new(derive_run_seed(33 + variant as u64, s), players);
                let d = run_distribution(variant, &params, &AttackSpec::none(), &mut rngs).unwrap();
                for n in 0..rounds {
                    let mut cell = 0usize;
                    for (j, r) in d.records.iter().enumerate() {
                        cell |= usize::from(r.b.get(n)) << j | usize::from(r.v.get(n)) << (players + j);
                    }
                    acc[cell] += 1;
                }
                acc
            },
        )
        .reduce(|| vec![0u64; 1 << (2 * players)], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect())
}

#[test]
fn criterion_03_prepare_measure_matches_entangled() {
    let mut exact_tv: f64 = 0.0;
    for players in [2, 3] {
        let pm = pm_exact(players);
        let eb = eb_exact(players);
        let oracle: BTreeMap<(u32, u32), f64> = (0..1u32 << players)
            .flat_map(|b| (0..1u32 << players).map(move |v| ((b, v), closed_form(players, b, v))))
            .collect();
        exact_tv = exact_tv.max(tv(&pm, &eb)).max(tv(&pm, &oracle)).max(tv(&eb, &oracle));
    }
    let samples = 100_000;
    let pm = empirical_round_table(Variant::PrepareMeasure, 4, 256, samples);
    let eb = empirical_round_table(Variant::Entangled, 4, 256, samples);
    let total = (samples * 256) as f64;
    let empirical_tv = 0.5 * pm.iter().zip(&eb).map(|(&a, &b)| (a as f64 - b as f64).abs() / total).sum::<f64>();
    report(
        3,
        exact_tv < 1e-10 && empirical_tv < 0.01,
        format!("exact TV (N=1, J=2,3) {exact_tv:.2e}; empirical TV (N=256, J=4, {samples} samples) {empirical_tv:.5}"),
    );
}

#[test]
fn criterion_04_error_rate_tracks_noise() {
    let params = ProtocolParams {
        mu: 0.05,
        delta: 0.1,
        nu: 0.05,
        tau_prime: 512,
        key_length: KeyLength::Fixed(1024),
        ..ProtocolParams::new(3, 1 << 14)
    };
    let outs = sessions(&params, &AttackSpec::none(), 4, 100);
    let qs: Vec<f64> = outs.iter().filter_map(|o| o.stats.q).collect();
    let mean_q = qs.iter().sum::<f64>() / qs.len() as f64;
    let aborts = outs.iter().filter(|o| o.aborted()).count();
    let rate = aborts as f64 / outs.len() as f64;
    let p2: f64 = outs
        .iter()
        .map(|o| (-2.0 * o.stats.tau as f64 * (params.delta - params.mu).powi(2)).exp())
        .sum::<f64>()
        / outs.len() as f64;
    report(
        4,
        (0.04..=0.06).contains(&mean_q) && rate <= p2,
        format!("mean q {mean_q:.4} over {} sessions; abort rate {rate:.3} vs p2 {p2:.3}", outs.len()),
    );
}

#[test]
fn criterion_05_abort_bound_holds() {
    let grid = [(0.02, 0.06, 0.04), (0.03, 0.08, 0.05), (0.0, 0.05, 0.03)];
    let runs = 200;
    let mut all_ok = true;
    let mut parts = Vec::new();
    for (i, &(mu, delta, nu)) in grid.iter().enumerate() {
        let params = ProtocolParams {
            mu,
            delta,
            nu,
            tau_prime: 2048,
            key_length: KeyLength::Fixed(1024),
            ..ProtocolParams::new(3, 1 << 14)
        };
        let outs = sessions(&params, &AttackSpec::none(), 50 + i as u64, runs);
        let aborts = outs.iter().filter(|o| o.aborted()).count();
        let sifted: Vec<_> = outs.iter().filter(|o| o.stats.abort != Some(AbortStage::Sifting)).collect();
        let mean = |f: &dyn Fn(&SessionOutcome) -> f64| sifted.iter().map(|o| f(o)).sum::<f64>() / sifted.len() as f64;
        let tau = mean(&|o| o.stats.tau as f64);
        let l = mean(&|o| o.stats.l as f64);
        let inputs = BoundInputs {
            n: params.rounds as f64,
            l,
            m: l - tau,
            tau,
            tau_prime: params.tau_prime as f64,
            delta,
            nu,
            mu,
            q: mu,
            eta: params.eta as f64,
            chi: 0.0,
            k: 1024.0,
            honest: 3,
            p_ec: 0.0,
        };
        let bound = abort_bound(&inputs).unwrap().total;
        let rate = aborts as f64 / runs as f64;
        let limit = plus_three_sigma(bound.min(1.0), runs as usize);
        all_ok &= rate <= limit;
        parts.push(format!("(mu={mu}, delta={delta}, nu={nu}) rate {rate:.3} <= {limit:.3}"));
    }
    report(5, all_ok, parts.join("; "));
}

#[test]
fn criterion_06_intercept_resend_is_detected() {
    let attack = AttackSpec {
        link: LinkAttack::InterceptResend { link: 1, policy: InterceptPolicy::Uniform },
        ..AttackSpec::none()
    };
    let params = ProtocolParams { tau_prime: 4096, delta: 0.1, ..ProtocolParams::new(3, 1 << 14) };
    let outs = sessions(&params, &attack, 6, 200);
    let min_tau = outs.iter().map(|o| o.stats.tau).min().unwrap();
    let qs: Vec<f64> = outs.iter().filter_map(|o| o.stats.q).collect();
    let mean_q = qs.iter().sum::<f64>() / qs.len() as f64;
    let aborts = outs.iter().filter(|o| o.stats.abort == Some(AbortStage::Estimation)).count();
    report(
        6,
        min_tau >= 1000 && (mean_q - 0.25).abs() <= 0.02 && aborts * 100 >= 99 * outs.len(),
        format!("min tau {min_tau}, mean sifted q {mean_q:.4}, aborts {aborts}/{}", outs.len()),
    );
}

#[test]
fn criterion_07_offset_equivalence() {
    // Left: the middle player's rotation acts on the qubit, the last player
    // measures in its own basis, and the result is offset classically.
    // Right: the last player measures the unrotated qubit in the offset basis
    // and reads the outcome with the usual labels, where the circular
    // eigenstate +i is 0.
    let mut worst: f64 = 0.0;
    let mut combos = 0;
    for x in 0..4u8 {
        let state = QuantumRegister::prepare_initial(PhaseExponent::new(x));
        for b_d in [false, true] {
            for v_d in [false, true] {
                let mut rotated = state.clone();
                rotated.apply_z_power(0, PhaseExponent::from_bits(b_d, v_d)).unwrap();
                for b_bob in [false, true] {
                    for v_bob in [false, true] {
                        let left = rotated.outcome_probability(0, MeasurementBasis::from_bit(b_bob), v_bob).unwrap();
                        let (b_hat, v_hat) = apply_offset(b_bob, b_d, v_d, v_bob);
                        let device_outcome = v_hat ^ b_hat;
                        let right = state
                            .outcome_probability(0, MeasurementBasis::from_bit(b_hat), device_outcome)
                            .unwrap();
                        worst = worst.max((left - right).abs());
                        combos += 1;
                    }
                }
            }
        }
    }
    report(
        7,
        combos == 64 && worst <= 1e-12,
        format!("{combos} cases (16 offsets and outcomes x 4 states), max deviation {worst:.2e}"),
    );
}

#[test]
fn criterion_08_error_correction() {
    let m = 1 << 13;
    let rate = 0.06;
    let weight = (rate * m as f64).floor() as usize;
    let trials = 1000u64;
    let eta = 32;
    let results: Vec<(bool, bool)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(800 + t, Stream::Application);
            let code = LinearCode::for_error_rate(m, rate, &CodeConfig { seed: t, ..CodeConfig::default() }).unwrap();
            let alice = Bits::random(m, &mut rng);
            let mut bob = alice.clone();
            for i in sample(&mut rng, m, weight).iter() {
                bob.flip(i);
            }
            let target = &code.syndrome(&alice).unwrap() ^ &code.syndrome(&bob).unwrap();
            if let Ok(e) = code.decode_error(&target) {
                bob ^= &e;
            }
            let decoded = bob == alice;
            let hash = ToeplitzHash::sample(m, eta, &Bits::random(m + eta - 1, &mut rng)).unwrap();
            let caught = !correctness_passes(&hash, &[alice, bob]).unwrap();
            (decoded, caught)
        })
        .collect();
    let successes = results.iter().filter(|r| r.0).count();
    let failures = results.len() - successes;
    let missed = results.iter().filter(|r| !r.0 && !r.1).count();
    let missed_ok = failures == 0 || missed as f64 / failures as f64 <= plus_three_sigma(2f64.powi(-(eta as i32)), failures);
    report(
        8,
        successes * 1000 >= 999 * trials as usize && missed_ok,
        format!("{successes}/{trials} decoded at weight {weight} of M={m}; {missed} of {failures} failures missed by the check"),
    );
}

#[test]
fn criterion_09_round_count_order_of_magnitude() {
    let base = RoundCountInputs {
        k: 1.7e6,
        target_eps: 1e-11,
        delta: 0.03,
        nu: 0.01,
        mu: 0.02,
        eta: 40.0,
        overhead: 0.2,
        honest: 2,
        p_ec: 0.0,
    };
    let mut lines = Vec::new();
    for delta in [0.02, 0.03, 0.04, 0.05] {
        for nu in [0.005, 0.01, 0.02] {
            for overhead in [0.1, 0.2, 0.5] {
                let r = RoundCountInputs { delta, nu, overhead, mu: base.mu.min(delta), ..base };
                let n = solve_round_count(&r).map(|s| format!("{:.3e}", s.n)).unwrap_or_else(|e| e.to_string());
                lines.push(format!("  delta={delta} nu={nu} overhead={overhead} -> N={n}\n"));
            }
        }
    }
    let _ = std::io::stderr().lock().write_all(lines.concat().as_bytes());
    let sol = solve_round_count(&base).unwrap();
    report(
        9,
        (1e6..=1e8).contains(&sol.n),
        format!(
            "operating point delta={} nu={} mu={} overhead={} eta={}: N={:.3e}, tau'={:.0}, M={:.0}, eps={:.2e}",
            base.delta, base.nu, base.mu, base.overhead, base.eta, sol.n, sol.tau_prime, sol.m, sol.eps
        ),
    );
}

#[test]
fn criterion_10_applications() {
    let params = ProtocolParams { key_length: KeyLength::Fixed(64), ..ProtocolParams::new(4, 2048) };
    let sets: Vec<ShareSet> = sessions(&params, &AttackSpec::none(), 10, 600)
        .iter()
        .enumerate()
        .filter_map(|(i, o)| ShareSet::from_outcome(i as u64, o).ok())
        .collect();
    assert!(sets.len() >= 600 - 6, "too many aborted sessions");

    let mut rng = stream(10, Stream::Application);
    let mut veto_runs_ok = 0;
    for run in 0..100 {
        let round_sets = &sets[4 * run..4 * run + 4];
        let mut ok = true;
        for pattern in 0..16u32 {
            let flags: Vec<bool> = (0..4).map(|i| pattern >> i & 1 == 1).collect();
            let mut ch = Channel::new(4, stream(run as u64, Stream::Channel));
            ok &= anonymous_veto(round_sets, &flags, &mut ch, &mut rng).unwrap().veto == (pattern != 0);
        }
        veto_runs_ok += usize::from(ok);
    }

    let mut keys_equal = 0;
    let mut pads_ok = 0;
    for (i, set) in sets[400..500].iter().enumerate() {
        let mut ch = Channel::new(4, stream(i as u64, Stream::Channel));
        let (a, b) = establish_key(set, 2, 4, &mut ch).unwrap();
        keys_equal += usize::from(a == b);
        let secret = Bits::random(64, &mut rng);
        let dealer = i % 4 + 1;
        let c = share_message(dealer, &secret, set, &mut ch).unwrap();
        pads_ok += usize::from(reconstruct(dealer, &c, set).unwrap() == secret);
    }
    let key_rate = keys_equal as f64 / 100.0;
    report(
        10,
        veto_runs_ok == 100 && key_rate >= 1.0 - 2f64.powi(-32) && pads_ok == 100,
        format!("veto truth table {veto_runs_ok}/100 runs, key equality {keys_equal}/100, pad round trips {pads_ok}/100"),
    );
}
