use std::collections::BTreeMap;

use qline::adversary::AttackSpec;
use qline::applications::{anonymous_veto, establish_key, reconstruct, share_message, AppError, ShareSet};
use qline::channel::{Channel, Stage};
use qline::protocol::{run_session, KeyLength, ProtocolParams, Variant};
use qline::rng::{derive_run_seed, stream, Stream};
use qline::{Bits, PlayerId};
use rayon::prelude::*;

fn params(players: usize, rounds: usize, k: usize) -> ProtocolParams {
    ProtocolParams { key_length: KeyLength::Fixed(k), ..ProtocolParams::new(players, rounds) }
}

fn share_set(p: &ProtocolParams, id: u64) -> ShareSet {
    let out = run_session(p, Variant::PrepareMeasure, &AttackSpec::none(), derive_run_seed(99, id)).unwrap();
    ShareSet::from_outcome(id, &out).unwrap()
}

fn channel(players: usize, seed: u64) -> Channel {
    Channel::new(players, stream(seed, Stream::Channel))
}

fn synthetic(players: usize, k: usize, rng: &mut qline::rng::SimRng) -> ShareSet {
    let mut shares: BTreeMap<PlayerId, Bits> = (1..players).map(|j| (j, Bits::random(k, rng))).collect();
    let last = shares.values().fold(Bits::zeros(k), |acc, s| &acc ^ s);
    shares.insert(players, last);
    ShareSet::new(0, players, shares).unwrap()
}

#[test]
fn one_time_pad_round_trip() {
    let p = params(4, 1024, 64);
    let mut rng = stream(1, Stream::Application);
    for id in 0..100 {
        let set = share_set(&p, id);
        assert!(set.is_consistent());
        let dealer = (id as usize % 4) + 1;
        let secret = Bits::random(64, &mut rng);
        let mut ch = channel(4, id);
        let c = share_message(dealer, &secret, &set, &mut ch).unwrap();
        assert_eq!(reconstruct(dealer, &c, &set).unwrap(), secret);
        assert_eq!(ch.transcript().by_stage(Stage::Ciphertext).next().unwrap().payload, c);
    }
}

#[test]
fn partial_reconstruction_looks_uniform() {
    let p = params(4, 512, 16);
    let trials = 10_000u64;
    let (counts, used): (Vec<usize>, usize) = (0..trials)
        .into_par_iter()
        .filter_map(|id| {
            let out = run_session(&p, Variant::PrepareMeasure, &AttackSpec::none(), derive_run_seed(98, id)).unwrap();
            let set = ShareSet::from_outcome(id, &out).ok()?;
            let c = share_message(1, &Bits::zeros(16), &set, &mut channel(4, id)).unwrap();
            // shares of players 2 and 3 only; player 4 is missing
            let guess = &(&c ^ set.share(2).unwrap()) ^ set.share(3).unwrap();
            Some((guess.to_bools().into_iter().map(usize::from).collect::<Vec<_>>(), 1))
        })
        .reduce(
            || (vec![0; 16], 0),
            |a, b| (a.0.iter().zip(&b.0).map(|(x, y)| x + y).collect(), a.1 + b.1),
        );
    assert!(used as u64 > trials * 99 / 100, "{used}");
    for c in counts {
        let f = c as f64 / used as f64;
        assert!((f - 0.5).abs() < 0.02, "{f}");
    }
}

#[test]
fn veto_is_the_or_of_flags() {
    let p = params(4, 1024, 64);
    let mut rng = stream(2, Stream::Application);
    for run in 0..20u64 {
        let sets: Vec<ShareSet> = (0..4).map(|r| share_set(&p, 1000 + 4 * run + r)).collect();
        for pattern in 0..16u32 {
            let flags: Vec<bool> = (0..4).map(|i| pattern >> i & 1 == 1).collect();
            let mut ch = channel(4, run);
            let out = anonymous_veto(&sets, &flags, &mut ch, &mut rng).unwrap();
            assert_eq!(out.veto, pattern != 0, "pattern {pattern:04b}");
            assert_eq!(ch.transcript().by_stage(Stage::Veto).count(), 16);
        }
    }
}

#[test]
fn single_veto_round_collisions_match_two_to_minus_k() {
    let mut rng = stream(3, Stream::Application);
    let trials = 100_000;
    let mut missed_rounds = 0usize;
    let mut rounds = 0usize;
    for _ in 0..trials / 4 {
        let sets: Vec<ShareSet> = (0..4).map(|_| synthetic(4, 8, &mut rng)).collect();
        let out = anonymous_veto(&sets, &[false, true, false, false], &mut channel(4, 0), &mut rng).unwrap();
        missed_rounds += out.rounds.iter().filter(|&&r| !r).count();
        rounds += out.rounds.len();
    }
    let p = 2f64.powi(-8);
    let rate = missed_rounds as f64 / rounds as f64;
    let sigma = (p * (1.0 - p) / rounds as f64).sqrt();
    assert!((rate - p).abs() <= 3.0 * sigma, "{rate} vs {p}");
}

#[test]
fn no_veto_passes() {
    let p = params(3, 1024, 64);
    let sets: Vec<ShareSet> = (0..3).map(|r| share_set(&p, 50 + r)).collect();
    let mut rng = stream(4, Stream::Application);
    let out = anonymous_veto(&sets, &[false; 3], &mut channel(3, 0), &mut rng).unwrap();
    assert!(!out.veto);
    assert_eq!(out.rounds, vec![false; 3]);
}

/// Chi-square statistic of `counts` against the uniform distribution.
fn chi_square(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
}

#[test]
fn vetoing_and_honest_announcements_share_a_distribution() {
    // 255 degrees of freedom; 330 is beyond the 0.1% tail
    const CRITICAL: f64 = 330.0;
    let p = params(3, 256, 8);
    let trials = 100_000u64;
    let (vetoing, honest) = (0..trials)
        .into_par_iter()
        .filter_map(|id| {
            let out = run_session(&p, Variant::PrepareMeasure, &AttackSpec::none(), derive_run_seed(7, id)).unwrap();
            let set = ShareSet::from_outcome(id, &out).ok()?;
            let mut rng = stream(id, Stream::Application);
            let sets = vec![set.clone(), set.clone(), set];
            let mut ch = channel(3, id);
            anonymous_veto(&sets, &[false, true, false], &mut ch, &mut rng).unwrap();
            let first_round = &ch.transcript().entries()[..3];
            let word = |j: usize| {
                let e = first_round.iter().find(|e| e.sender == qline::channel::Sender::Player(j)).unwrap();
                e.payload.to_bools().iter().enumerate().map(|(i, &b)| usize::from(b) << i).sum::<usize>()
            };
            Some((word(2), word(1)))
        })
        .fold(
            || (vec![0usize; 256], vec![0usize; 256]),
            |(mut v, mut h), (a, b)| {
                v[a] += 1;
                h[b] += 1;
                (v, h)
            },
        )
        .reduce(
            || (vec![0usize; 256], vec![0usize; 256]),
            |(mut v, mut h), (v2, h2)| {
                for i in 0..256 {
                    v[i] += v2[i];
                    h[i] += h2[i];
                }
                (v, h)
            },
        );
    // short sessions occasionally abort at sifting
    assert!(vetoing.iter().sum::<usize>() as u64 > trials * 95 / 100);
    assert!(chi_square(&vetoing) < CRITICAL, "{}", chi_square(&vetoing));
    assert!(chi_square(&honest) < CRITICAL, "{}", chi_square(&honest));
}

#[test]
fn pairwise_keys_agree() {
    let p = params(4, 1024, 64);
    let mut equal = 0;
    for id in 0..100 {
        let set = share_set(&p, 200 + id);
        let mut ch = channel(4, id);
        let (a, b) = establish_key(&set, 1, 3, &mut ch).unwrap();
        equal += usize::from(a == b);
        let revealed: Vec<_> = ch.transcript().by_stage(Stage::KeyReveal).map(|e| e.sender).collect();
        assert_eq!(revealed.len(), 2);
    }
    assert_eq!(equal, 100);
}

#[test]
fn aborted_sessions_give_no_share_set() {
    let p = ProtocolParams { mu: 0.3, ..params(3, 1024, 64) };
    let out = run_session(&p, Variant::PrepareMeasure, &AttackSpec::none(), 1).unwrap();
    assert!(out.aborted());
    assert_eq!(ShareSet::from_outcome(9, &out), Err(AppError::Aborted(9)));
}
