//! Batch experiments: a flat TOML configuration, parallel execution with
//! per-run seeds derived from one master seed, aggregation, and JSON/CSV
//! reports that pair empirical rates with their analytic bounds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{AttackSpec, DishonestPolicy, InterceptPolicy, LinkAttack};
use crate::channel::{PlayerId, Stage};
use crate::coding::{CodeConfig, SparseDecoder, DEFAULT_OVERHEAD};
use crate::protocol::{run_session, AbortStage, KeyLength, ProtocolParams, SessionOutcome, SessionStats, Variant};
use crate::rng::derive_run_seed;
use crate::security::{abort_bound, eps_for, BoundInputs};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(String),
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    #[default]
    None,
    PhaseFlip,
    InterceptResend,
    CustomUnitary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
    Both,
}

/// Experiment description as flat key/value pairs. Every field has a
/// default; see `docs/config.md` for the key reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub players: usize,
    pub rounds: usize,
    pub eta: usize,
    /// Defaults to `rounds / 16`.
    pub tau_prime: Option<usize>,
    pub delta: f64,
    pub nu: f64,
    /// Fixed share length; defaults to `rounds / 8` unless `target_eps` is set.
    pub key_length: Option<usize>,
    /// Pick the share length from the security bound instead.
    pub target_eps: Option<f64>,
    pub mu: f64,
    pub noise_link: Option<usize>,
    pub code_overhead: f64,
    pub code_column_weight: usize,
    pub code_max_iter: usize,
    pub code_decoder: SparseDecoder,
    pub code_seed: u64,
    pub variant: Variant,

    pub attack: AttackKind,
    pub attack_link: Option<usize>,
    pub attack_mu: f64,
    pub attack_policy: InterceptPolicy,
    /// Row-major `[re, im]` entries of a 2×2 unitary, eight numbers.
    pub attack_matrix: Vec<f64>,
    /// Entries `player=strategy` or `player=flip-syndrome-bit:index`.
    pub dishonest: Vec<String>,
    pub block_at: Option<Stage>,
    pub coin_abort: bool,

    pub repetitions: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: ReportFormat,
    pub histogram_bins: usize,
    /// Record wall-clock time. Off by default so reports are reproducible
    /// byte for byte.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            players: 3,
            rounds: 4096,
            eta: 32,
            tau_prime: None,
            delta: 0.1,
            nu: 0.02,
            key_length: None,
            target_eps: None,
            mu: 0.0,
            noise_link: None,
            code_overhead: DEFAULT_OVERHEAD,
            code_column_weight: 3,
            code_max_iter: 100,
            code_decoder: SparseDecoder::BeliefPropagation,
            code_seed: 0,
            variant: Variant::PrepareMeasure,
            attack: AttackKind::None,
            attack_link: None,
            attack_mu: 0.0,
            attack_policy: InterceptPolicy::Uniform,
            attack_matrix: Vec::new(),
            dishonest: Vec::new(),
            block_at: None,
            coin_abort: false,
            repetitions: 100,
            seed: 0,
            output: None,
            format: ReportFormat::Json,
            histogram_bins: 20,
            timing: false,
        }
    }
}

fn parse_dishonest(entry: &str) -> Result<(PlayerId, DishonestPolicy), HarnessError> {
    let bad = || config_err(format!("dishonest entry `{entry}` is not `player=strategy`"));
    let (player, strategy) = entry.split_once('=').ok_or_else(bad)?;
    let player: PlayerId = player.trim().parse().map_err(|_| bad())?;
    let strategy = strategy.trim();
    let policy = match strategy.split_once(':') {
        Some(("flip-syndrome-bit", index)) => DishonestPolicy::FlipSyndromeBit {
            index: index.parse().map_err(|_| bad())?,
        },
        Some(_) => return Err(bad()),
        None => match strategy {
            "honest" => DishonestPolicy::Honest,
            "flip-values" => DishonestPolicy::FlipValues,
            "random-values" => DishonestPolicy::RandomValues,
            "random-bases" => DishonestPolicy::RandomBases,
            "flip-check-hash" => DishonestPolicy::FlipCheckHash,
            "flip-syndrome-bit" => DishonestPolicy::FlipSyndromeBit { index: 0 },
            _ => return Err(config_err(format!("unknown strategy `{strategy}`"))),
        },
    };
    Ok((player, policy))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is plain data")
    }

    pub fn params(&self) -> Result<ProtocolParams, HarnessError> {
        let key_length = match (self.key_length, self.target_eps) {
            (Some(_), Some(_)) => return Err(config_err("set key_length or target_eps, not both")),
            (Some(k), None) => KeyLength::Fixed(k),
            (None, Some(target_eps)) => KeyLength::Auto { target_eps },
            (None, None) => KeyLength::Fixed((self.rounds / 8).max(1)),
        };
        let params = ProtocolParams {
            players: self.players,
            rounds: self.rounds,
            eta: self.eta,
            tau_prime: self.tau_prime.unwrap_or((self.rounds / 16).max(1)),
            delta: self.delta,
            nu: self.nu,
            key_length,
            mu: self.mu,
            noise_link: self.noise_link,
            code: CodeConfig {
                overhead: self.code_overhead,
                column_weight: self.code_column_weight,
                max_iter: self.code_max_iter,
                decoder: self.code_decoder,
                seed: self.code_seed,
            },
        };
        params.validate().map_err(|e| config_err(e.0))?;
        params
            .validate_line(self.variant == Variant::Entangled)
            .map_err(|e| config_err(e.0))?;
        Ok(params)
    }

    pub fn attack_spec(&self) -> Result<AttackSpec, HarnessError> {
        let link = || self.attack_link.ok_or_else(|| config_err("attack_link is required for this attack"));
        let link_attack = match self.attack {
            AttackKind::None => LinkAttack::None,
            AttackKind::PhaseFlip => LinkAttack::PhaseFlip { link: link()?, mu: self.attack_mu },
            AttackKind::InterceptResend => LinkAttack::InterceptResend { link: link()?, policy: self.attack_policy },
            AttackKind::CustomUnitary => {
                let m = &self.attack_matrix;
                if m.len() != 8 {
                    return Err(config_err(format!("attack_matrix needs 8 numbers, got {}", m.len())));
                }
                let e = |r: usize, c: usize| [m[4 * r + 2 * c], m[4 * r + 2 * c + 1]];
                LinkAttack::CustomUnitary { link: link()?, matrix: [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]] }
            }
        };
        let mut dishonest = BTreeMap::new();
        for entry in &self.dishonest {
            let (j, policy) = parse_dishonest(entry)?;
            if dishonest.insert(j, policy).is_some() {
                return Err(config_err(format!("player {j} listed twice as dishonest")));
            }
        }
        let spec = AttackSpec { link: link_attack, dishonest, block_at: self.block_at, coin_abort: self.coin_abort };
        spec.validate(self.players).map_err(config_err)?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.params()?;
        self.attack_spec()?;
        if self.histogram_bins == 0 {
            return Err(config_err("histogram_bins must be positive"));
        }
        Ok(())
    }

    /// Whether the configuration describes an honest run, the setting the
    /// abort bound covers.
    pub fn is_honest(&self) -> bool {
        self.attack == AttackKind::None && self.dishonest.is_empty() && self.block_at.is_none() && !self.coin_abort
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub index: u64,
    pub seed: u64,
    pub stats: SessionStats,
}

/// Counts of `q` over `bins` equal bins of `[0, 1/2]`; larger values land in
/// the last bin and runs that never estimated `q` are counted separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub undefined: usize,
}

impl QHistogram {
    fn new(bins: usize, qs: impl Iterator<Item = Option<f64>>) -> Self {
        let width = 0.5 / bins as f64;
        let edges = (0..=bins).map(|i| i as f64 * width).collect();
        let mut counts = vec![0; bins];
        let mut undefined = 0;
        for q in qs {
            match q {
                Some(q) => counts[((q / width) as usize).min(bins - 1)] += 1,
                None => undefined += 1,
            }
        }
        QHistogram { edges, counts, undefined }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.undefined
    }
}

/// An empirical rate next to the analytic bound on it, when there is one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCheck {
    pub name: String,
    pub events: usize,
    pub trials: usize,
    pub rate: Option<f64>,
    pub bound: Option<f64>,
    pub note: Option<String>,
}

impl RateCheck {
    fn new(name: &str, events: usize, trials: usize, bound: Option<f64>, note: Option<String>) -> Self {
        RateCheck {
            name: name.into(),
            events,
            trials,
            rate: (trials > 0).then(|| events as f64 / trials as f64),
            bound,
            note,
        }
    }

    /// Whether the rate stays within the bound plus three binomial standard
    /// deviations.
    pub fn within_bound(&self) -> Option<bool> {
        let (rate, bound) = (self.rate?, self.bound?);
        let p = bound.min(1.0);
        Some(rate <= p + 3.0 * (p * (1.0 - p) / self.trials as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub runs: usize,
    pub successes: usize,
    /// Abort count per stage.
    pub aborts: BTreeMap<String, usize>,
    pub xor_violations: usize,
    pub decoder_failures: usize,
    pub mean_q: Option<f64>,
    pub mean_tau: Option<f64>,
    pub mean_m: Option<f64>,
    pub q_histogram: QHistogram,
    pub wall_clock_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub runs: Vec<RunSummary>,
    pub aggregates: Aggregates,
    pub checks: Vec<RateCheck>,
    /// Total security bound at the mean realized sizes, when defined.
    pub eps_total: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Bound inputs at the mean sizes of the runs that reached each stage,
/// falling back to expected sizes where no run did.
fn mean_inputs(config: &ExperimentConfig, params: &ProtocolParams, runs: &[RunSummary]) -> BoundInputs {
    let n = params.rounds as f64;
    let tp = params.tau_prime as f64;
    let sifted = runs.iter().filter(|r| r.stats.abort != Some(AbortStage::Sifting));
    let estimated: Vec<&SessionStats> = runs.iter().map(|r| &r.stats).filter(|s| s.m > 0).collect();
    let l = mean(sifted.clone().map(|r| r.stats.l as f64)).unwrap_or(n / 2.0);
    let tau = mean(sifted.map(|r| r.stats.tau as f64)).unwrap_or(tp / 2.0);
    let m = mean(estimated.iter().map(|s| s.m as f64)).unwrap_or(l - tau);
    let q = mean(estimated.iter().filter_map(|s| s.q)).unwrap_or(params.mu);
    let chi = mean(estimated.iter().filter(|s| s.chi > 0).map(|s| s.chi as f64)).unwrap_or(0.0);
    let k = match params.key_length {
        KeyLength::Fixed(k) => k as f64,
        KeyLength::Auto { .. } => mean(runs.iter().filter(|r| r.stats.k > 0).map(|r| r.stats.k as f64)).unwrap_or(0.0),
    };
    let honest = params.players - config.dishonest.len();
    BoundInputs {
        n,
        l,
        m,
        tau,
        tau_prime: tp,
        delta: params.delta,
        nu: params.nu,
        mu: params.mu,
        q,
        eta: params.eta as f64,
        chi,
        k,
        honest,
        p_ec: 0.0,
    }
}

fn aggregate(config: &ExperimentConfig, runs: &[RunSummary], wall_clock_ms: Option<u64>) -> Aggregates {
    let mut aborts = BTreeMap::new();
    for r in runs {
        if let Some(stage) = r.stats.abort {
            *aborts.entry(stage.to_string()).or_insert(0) += 1;
        }
    }
    let stats = || runs.iter().map(|r| &r.stats);
    Aggregates {
        runs: runs.len(),
        successes: stats().filter(|s| s.abort.is_none()).count(),
        aborts,
        xor_violations: stats().filter(|s| s.xor_zero == Some(false)).count(),
        decoder_failures: stats().filter(|s| s.decoder_failed).count(),
        mean_q: mean(stats().filter_map(|s| s.q)),
        mean_tau: mean(stats().filter(|s| s.abort != Some(AbortStage::Sifting) && s.l > 0).map(|s| s.tau as f64)),
        mean_m: mean(stats().filter(|s| s.m > 0).map(|s| s.m as f64)),
        q_histogram: QHistogram::new(config.histogram_bins, stats().map(|s| s.q)),
        wall_clock_ms,
    }
}

fn checks(config: &ExperimentConfig, params: &ProtocolParams, runs: &[RunSummary], agg: &Aggregates) -> Vec<RateCheck> {
    let inputs = mean_inputs(config, params, runs);
    let count = |stage: AbortStage| agg.aborts.get(&stage.to_string()).copied().unwrap_or(0);
    let (abort, note) = if !config.is_honest() {
        (None, Some("adversarial run: no abort bound applies".to_string()))
    } else {
        match abort_bound(&inputs) {
            Ok(b) => (Some(b), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    let sifted = runs.len() - count(AbortStage::Sifting);
    vec![
        RateCheck::new(
            "abort",
            runs.len() - agg.successes,
            runs.len(),
            abort.as_ref().map(|b| b.total),
            note.clone(),
        ),
        RateCheck::new("sifting-abort", count(AbortStage::Sifting), runs.len(), abort.as_ref().map(|b| b.p1), note.clone()),
        RateCheck::new("estimation-abort", count(AbortStage::Estimation), sifted, abort.as_ref().map(|b| b.p2), note),
        RateCheck::new(
            "share-xor-violation",
            agg.xor_violations,
            agg.successes,
            Some((-(params.eta as f64)).exp2()),
            None,
        ),
    ]
}

/// Runs `config.repetitions` sessions in parallel, in index order. Run `i`
/// uses seed `derive_run_seed(config.seed, i)`.
pub fn run_sessions(config: &ExperimentConfig) -> Result<Vec<(RunSummary, SessionOutcome)>, HarnessError> {
    config.validate()?;
    let params = config.params()?;
    let attack = config.attack_spec()?;
    Ok((0..config.repetitions as u64)
        .into_par_iter()
        .map(|index| {
            let seed = derive_run_seed(config.seed, index);
            let outcome = run_session(&params, config.variant, &attack, seed).expect("parameters validated");
            (RunSummary { index, seed, stats: outcome.stats.clone() }, outcome)
        })
        .collect())
}

/// Aggregates finished runs into a report.
pub fn build_report(
    config: &ExperimentConfig,
    runs: Vec<RunSummary>,
    wall_clock_ms: Option<u64>,
) -> Result<ExperimentReport, HarnessError> {
    let params = config.params()?;
    let aggregates = aggregate(config, &runs, wall_clock_ms);
    let checks = checks(config, &params, &runs, &aggregates);
    let eps_total = eps_for(&mean_inputs(config, &params, &runs)).ok();
    Ok(ExperimentReport { config: config.clone(), runs, aggregates, checks, eps_total })
}

/// Runs the experiment and writes the report to `config.output` when set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    let start = Instant::now();
    let runs = run_sessions(config)?.into_iter().map(|(summary, _)| summary).collect();
    let elapsed = config.timing.then(|| start.elapsed().as_millis() as u64);
    let report = build_report(config, runs, elapsed)?;
    if let Some(dir) = &config.output {
        emit_report(&report, dir, config.format)?;
    }
    Ok(report)
}

pub const CSV_HEADER: &str =
    "index,seed,abort,n,u,l,tau,q,m,chi,k,residual_before,residual_after,decoder_failed,xor_zero";

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

/// One row per run under [`CSV_HEADER`].
pub fn runs_to_csv(runs: &[RunSummary]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in runs {
        let s = &r.stats;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.index,
            r.seed,
            opt(&s.abort),
            s.n,
            s.u,
            s.l,
            s.tau,
            opt(&s.q),
            s.m,
            s.chi,
            s.k,
            opt(&s.residual_before),
            opt(&s.residual_after),
            s.decoder_failed,
            opt(&s.xor_zero),
        )
        .expect("writing to a string");
    }
    out
}

pub fn runs_from_csv(text: &str) -> Result<Vec<RunSummary>, HarnessError> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(HarnessError::Parse("missing or unexpected header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 15 {
                return Err(HarnessError::Parse(format!("expected 15 fields in `{line}`")));
            }
            fn num<T: std::str::FromStr>(s: &str) -> Result<T, HarnessError> {
                s.parse().map_err(|_| HarnessError::Parse(format!("bad field `{s}`")))
            }
            fn maybe<T: std::str::FromStr>(s: &str) -> Result<Option<T>, HarnessError> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    num(s).map(Some)
                }
            }
            Ok(RunSummary {
                index: num(f[0])?,
                seed: num(f[1])?,
                stats: SessionStats {
                    abort: maybe(f[2])?,
                    n: num(f[3])?,
                    u: num(f[4])?,
                    l: num(f[5])?,
                    tau: num(f[6])?,
                    q: maybe(f[7])?,
                    m: num(f[8])?,
                    chi: num(f[9])?,
                    k: num(f[10])?,
                    residual_before: maybe(f[11])?,
                    residual_after: maybe(f[12])?,
                    decoder_failed: num(f[13])?,
                    xor_zero: maybe(f[14])?,
                },
            })
        })
        .collect()
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
    }
}

/// Writes `report.json` and/or `runs.csv` into `dir` and returns the paths.
pub fn emit_report(report: &ExperimentReport, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if matches!(format, ReportFormat::Json | ReportFormat::Both) {
        let path = dir.join("report.json");
        fs::write(&path, report.to_json() + "\n")?;
        written.push(path);
    }
    if matches!(format, ReportFormat::Csv | ReportFormat::Both) {
        let path = dir.join("runs.csv");
        fs::write(&path, runs_to_csv(&report.runs))?;
        written.push(path);
    }
    Ok(written)
}
