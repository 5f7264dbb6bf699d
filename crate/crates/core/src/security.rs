//! Finite-key bounds: the correctness/secrecy parameter of a session, the
//! honest abort probability, and solvers for the share length `K` and the
//! round count `N`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SecurityError {
    #[error("{0}")]
    Domain(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
}

fn domain(msg: impl Into<String>) -> SecurityError {
    SecurityError::Domain(msg.into())
}

/// Binary entropy in bits, defined on the open interval (0, 1).
pub fn binary_entropy(x: f64) -> Result<f64, SecurityError> {
    if !(x > 0.0 && x < 1.0) {
        return Err(domain(format!("binary entropy needs 0 < x < 1, got {x}")));
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

/// Everything the bounds depend on. Counts are kept as floats so the
/// solvers can evaluate expected (fractional) sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub n: f64,
    pub l: f64,
    pub m: f64,
    pub tau: f64,
    pub tau_prime: f64,
    pub delta: f64,
    pub nu: f64,
    pub mu: f64,
    /// Estimated error rate the code was built for (minus the margin).
    pub q: f64,
    pub eta: f64,
    pub chi: f64,
    pub k: f64,
    /// Number of honest players.
    pub honest: usize,
    /// Decoder failure probability, measured or configured.
    pub p_ec: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundFlag {
    /// The estimation term is 2: no margin, no guarantee.
    VacuousEstimation,
    /// The amplification exponent is non-negative, so the bound is at least 1/2.
    UselessKey,
    /// Zero gap between noise and abort threshold.
    VacuousEstimationAbort,
    /// Zero gap between noise and the code's design rate.
    VacuousCorrectionAbort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsBreakdown {
    pub estimation_term: f64,
    pub amplification_term: f64,
    /// Base-2 exponent under the square root of the amplification term.
    pub amplification_exponent: f64,
    pub eps_qkd: f64,
    pub flags: Vec<BoundFlag>,
}

/// `2·exp(−(Mτ²/(L(τ+1)))·ν²) + ½·sqrt(2^(−M(1−h(δ+ν)) + η + χ + K))`.
pub fn eps_qkd_prime(x: &BoundInputs) -> Result<EpsBreakdown, SecurityError> {
    if !(x.m > 0.0 && x.l > 0.0 && x.tau > 0.0) {
        return Err(domain("M, L and tau must be positive"));
    }
    if x.nu < 0.0 || x.delta < 0.0 {
        return Err(domain("delta and nu must be non-negative"));
    }
    if x.delta + x.nu >= 0.5 {
        return Err(domain(format!("delta + nu = {} must stay below 1/2", x.delta + x.nu)));
    }
    let h = if x.delta + x.nu == 0.0 { 0.0 } else { binary_entropy(x.delta + x.nu)? };
    let mut flags = Vec::new();

    let rate = x.m * x.tau * x.tau / (x.l * (x.tau + 1.0));
    let estimation_term = 2.0 * (-rate * x.nu * x.nu).exp();
    if x.nu == 0.0 {
        flags.push(BoundFlag::VacuousEstimation);
    }

    let exponent = -x.m * (1.0 - h) + x.eta + x.chi + x.k;
    let amplification_term = 0.5 * (exponent / 2.0).exp2();
    if exponent >= 0.0 {
        flags.push(BoundFlag::UselessKey);
    }
    Ok(EpsBreakdown {
        estimation_term,
        amplification_term,
        amplification_exponent: exponent,
        eps_qkd: estimation_term + amplification_term,
        flags,
    })
}

/// `2^(−η) + (H − 1)·ε_QKD′`.
pub fn eps_total(honest: usize, eps_qkd: f64, eta: f64) -> Result<f64, SecurityError> {
    if honest < 2 {
        return Err(domain("at least two honest players are required"));
    }
    Ok((-eta).exp2() + (honest - 1) as f64 * eps_qkd)
}

/// Total bound for `x` including the correctness term.
pub fn eps_for(x: &BoundInputs) -> Result<f64, SecurityError> {
    eps_total(x.honest, eps_qkd_prime(x)?.eps_qkd, x.eta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortBound {
    /// Sifting leaves too few check rounds.
    pub p1: f64,
    /// Estimated error rate exceeds the threshold.
    pub p2: f64,
    /// Actual error rate exceeds what the code was built for.
    pub p3: f64,
    pub p_ec: f64,
    pub total: f64,
    pub flags: Vec<BoundFlag>,
}

/// Upper bound on the probability that an honest session with channel noise
/// `mu` aborts.
pub fn abort_bound(x: &BoundInputs) -> Result<AbortBound, SecurityError> {
    for (name, v) in [("mu", x.mu), ("delta", x.delta), ("p_ec", x.p_ec), ("q", x.q)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(domain(format!("{name} = {v} is not a probability")));
        }
    }
    if x.mu > x.delta {
        return Err(domain(format!("noise {} exceeds the abort threshold {}", x.mu, x.delta)));
    }
    if !(x.tau_prime > 0.0 && x.tau_prime < x.n) {
        return Err(domain("need 0 < tau' < N"));
    }
    let mut flags = Vec::new();
    let p1 = (-x.tau_prime / 8.0).exp() + (-(x.n - x.tau_prime) / 8.0).exp();
    let p2 = (-2.0 * x.tau * (x.delta - x.mu).powi(2)).exp();
    if x.mu == x.delta {
        flags.push(BoundFlag::VacuousEstimationAbort);
    }
    let gap = x.q + x.nu - x.mu;
    let p3 = if gap > 0.0 {
        (-2.0 * x.m * gap * gap).exp()
    } else {
        flags.push(BoundFlag::VacuousCorrectionAbort);
        1.0
    };
    Ok(AbortBound {
        p1,
        p2,
        p3,
        p_ec: x.p_ec,
        total: p1 + p2 + p3 + x.p_ec,
        flags,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyLength {
    pub k: usize,
    pub eps: f64,
}

/// Largest `K < M` whose total bound stays within `target`.
pub fn solve_key_length(x: &BoundInputs, target: f64) -> Result<KeyLength, SecurityError> {
    if !(target > 0.0) {
        return Err(domain("target epsilon must be positive"));
    }
    let m = x.m.floor() as usize;
    if m < 2 {
        return Err(SecurityError::Infeasible("no room for a key below M".into()));
    }
    let eps_at = |k: usize| eps_for(&BoundInputs { k: k as f64, ..*x });
    if target >= 1.0 {
        let k = m - 1;
        return Ok(KeyLength { k, eps: eps_at(k)? });
    }
    if eps_at(1)? > target {
        return Err(SecurityError::Infeasible(format!(
            "even K = 1 gives epsilon {:.3e} above {target:.3e}",
            eps_at(1)?
        )));
    }
    // eps grows with K; keep lo feasible
    let (mut lo, mut hi) = (1usize, m - 1);
    if eps_at(hi)? <= target {
        return Ok(KeyLength { k: hi, eps: eps_at(hi)? });
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if eps_at(mid)? <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(KeyLength { k: lo, eps: eps_at(lo)? })
}

/// Rates and targets for sizing a session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundCountInputs {
    pub k: f64,
    pub target_eps: f64,
    pub delta: f64,
    pub nu: f64,
    pub mu: f64,
    pub eta: f64,
    pub overhead: f64,
    pub honest: usize,
    pub p_ec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundCountSolution {
    pub n: f64,
    pub tau_prime: f64,
    pub l: f64,
    pub tau: f64,
    pub m: f64,
    pub chi: f64,
    pub eps: f64,
    pub breakdown: EpsBreakdown,
    /// Honest abort bound at the operating point, with the estimate at its
    /// expectation `q = mu`.
    pub abort: AbortBound,
}

/// Expected session sizes for `n` rounds and `tau_prime` check rounds: half
/// of all rounds survive sifting, and the code is built for `mu + nu`.
fn expected_inputs(r: &RoundCountInputs, n: f64, tau_prime: f64) -> Result<BoundInputs, SecurityError> {
    let l = n / 2.0;
    let tau = tau_prime / 2.0;
    let m = l - tau;
    let chi = if r.mu + r.nu > 0.0 {
        (m * binary_entropy(r.mu + r.nu)? * (1.0 + r.overhead)).ceil()
    } else {
        0.0
    };
    Ok(BoundInputs {
        n,
        l,
        m,
        tau,
        tau_prime,
        delta: r.delta,
        nu: r.nu,
        mu: r.mu,
        q: r.mu,
        eta: r.eta,
        chi,
        k: r.k,
        honest: r.honest,
        p_ec: r.p_ec,
    })
}

/// Best check-set size for `n` rounds and the resulting epsilon.
fn best_tau_prime(r: &RoundCountInputs, n: f64) -> Result<(f64, f64), SecurityError> {
    let eps = |tp: f64| -> Result<f64, SecurityError> {
        let x = expected_inputs(r, n, tp)?;
        if x.m <= 0.0 {
            return Ok(f64::INFINITY);
        }
        eps_for(&x)
    };
    let lo = 2.0f64;
    let hi = n - 2.0;
    if hi <= lo {
        return Ok((lo, f64::INFINITY));
    }
    // coarse log grid, then ternary refinement around the best cell
    const STEPS: usize = 200;
    let ratio = (hi / lo).ln() / STEPS as f64;
    let mut best = (lo, eps(lo)?);
    let mut best_i = 0;
    for i in 1..=STEPS {
        let tp = (lo * (ratio * i as f64).exp()).min(hi);
        let e = eps(tp)?;
        if e < best.1 {
            best = (tp, e);
            best_i = i;
        }
    }
    let mut a = lo * (ratio * best_i.saturating_sub(1) as f64).exp();
    let mut b = (lo * (ratio * (best_i + 1) as f64).exp()).min(hi);
    for _ in 0..100 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if eps(m1)? <= eps(m2)? {
            b = m2;
        } else {
            a = m1;
        }
    }
    let tp = ((a + b) / 2.0).round().clamp(lo, hi);
    let e = eps(tp)?;
    Ok(if e < best.1 { (tp, e) } else { (best.0.round(), eps(best.0.round())?) })
}

/// Smallest round count (to 1% relative precision) at which a `k`-bit share
/// meets `target_eps` with expected session sizes.
pub fn solve_round_count(r: &RoundCountInputs) -> Result<RoundCountSolution, SecurityError> {
    if !(r.target_eps > 0.0 && r.target_eps < 1.0) {
        return Err(domain("target epsilon must lie in (0, 1)"));
    }
    if r.mu > r.delta || r.delta + r.nu >= 0.5 || r.mu + r.nu >= 0.5 {
        return Err(SecurityError::Infeasible(format!(
            "rates delta={}, nu={}, mu={} leave no room for a key",
            r.delta, r.nu, r.mu
        )));
    }
    if (-r.eta).exp2() >= r.target_eps {
        return Err(SecurityError::Infeasible(format!(
            "the correctness term 2^-{} alone exceeds the target",
            r.eta
        )));
    }
    let h_margin = binary_entropy(r.delta + r.nu)?;
    let h_code = if r.mu + r.nu > 0.0 { binary_entropy(r.mu + r.nu)? } else { 0.0 };
    if 1.0 - h_margin - h_code * (1.0 + r.overhead) <= 0.0 {
        return Err(SecurityError::Infeasible("entropy penalty exceeds one bit per round".into()));
    }
    let feasible = |n: f64| -> Result<bool, SecurityError> { Ok(best_tau_prime(r, n)?.1 <= r.target_eps) };

    let mut hi = 1024.0f64;
    while !feasible(hi)? {
        hi *= 2.0;
        if hi > 1e15 {
            return Err(SecurityError::Infeasible("no round count below 1e15 suffices".into()));
        }
    }
    let mut lo = hi / 2.0;
    if lo < 1024.0 || feasible(lo)? {
        lo = 0.0;
    }
    while hi - lo > 0.01 * hi {
        let mid = ((lo + hi) / 2.0).floor();
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let n = hi;
    let (tau_prime, eps) = best_tau_prime(r, n)?;
    let x = expected_inputs(r, n, tau_prime)?;
    let breakdown = eps_qkd_prime(&x)?;
    let abort = abort_bound(&x)?;
    Ok(RoundCountSolution {
        n,
        tau_prime,
        l: x.l,
        tau: x.tau,
        m: x.m,
        chi: x.chi,
        eps,
        breakdown,
        abort,
    })
}
