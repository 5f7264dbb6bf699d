//! `qline` command-line front end.
//!
//! Exit codes: 0 on success, 1 on I/O failure, 2 on invalid configuration or
//! input, 3 when a single-run invocation ends in a protocol abort.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qline::adversary::InterceptPolicy;
use qline::applications::{anonymous_veto, establish_key, reconstruct, share_message, AppError, ShareSet};
use qline::channel::Channel;
use qline::harness::{
    build_report, emit_report, run_sessions, AttackKind, ExperimentConfig, ExperimentReport, HarnessError,
    ReportFormat,
};
use qline::protocol::run_session;
use qline::rng::{derive_run_seed, stream, Stream};
use qline::security::{abort_bound, eps_qkd_prime, eps_total, solve_key_length, solve_round_count, BoundInputs, RoundCountInputs};
use qline::Bits;
use serde_json::json;

#[derive(Parser)]
#[command(name = "qline", version, about = "Secret sharing of zero over a linear quantum network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch experiment from a config file.
    Run(RunArgs),
    /// Evaluate security bounds and solvers.
    #[command(subcommand)]
    Calc(CalcCommand),
    /// Run an experiment with a link attack layered on the config.
    Attack(AttackArgs),
    /// One-time-pad a secret with a persisted share set and reconstruct it.
    Share(ShareArgs),
    /// Anonymous veto over persisted share sets.
    Veto(VetoArgs),
    /// Pairwise key from a persisted share set.
    Keyex(KeyexArgs),
    /// Run one session and print its public transcript.
    Trace(TraceArgs),
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    /// Flat TOML experiment config; defaults apply to missing keys.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Directory for report files.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Write share sets of successful runs as JSON lines.
    #[arg(long)]
    save_shares: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Both,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackArg {
    PhaseFlip,
    InterceptResend,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Hadamard,
    Circular,
    Uniform,
    Oracle,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long, value_enum, default_value = "intercept-resend")]
    kind: AttackArg,
    /// Attacked link; link j runs from player j to j+1.
    #[arg(long, default_value_t = 1)]
    link: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    policy: PolicyArg,
    /// Flip probability for phase-flip attacks.
    #[arg(long, default_value_t = 0.25)]
    flip: f64,
}

#[derive(Args)]
struct SharesInput {
    /// Share sets written by `run --save-shares`.
    #[arg(long)]
    shares: PathBuf,
    /// Seed for the channel and any local randomness.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ShareArgs {
    #[command(flatten)]
    input: SharesInput,
    /// Index of the share set in the file.
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long)]
    dealer: usize,
    /// Secret as `<len>:<hex>` or a 0/1 string; all zeros by default.
    #[arg(long)]
    secret: Option<String>,
}

#[derive(Args)]
struct VetoArgs {
    #[command(flatten)]
    input: SharesInput,
    /// One 0/1 flag per player, player 1 first.
    #[arg(long)]
    flags: String,
}

#[derive(Args)]
struct KeyexArgs {
    #[command(flatten)]
    input: SharesInput,
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long)]
    a: usize,
    #[arg(long)]
    b: usize,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run index whose derived seed is used.
    #[arg(long, default_value_t = 0)]
    index: u64,
    /// Write the transcript here instead of stdout.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long, default_value_t = 0.0)]
    n: f64,
    #[arg(long, default_value_t = 0.0)]
    l: f64,
    #[arg(long)]
    m: f64,
    #[arg(long)]
    tau: f64,
    #[arg(long, default_value_t = 0.0)]
    tau_prime: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0.02)]
    nu: f64,
    #[arg(long, default_value_t = 0.0)]
    mu: f64,
    #[arg(long, default_value_t = 0.0)]
    q: f64,
    #[arg(long, default_value_t = 32.0)]
    eta: f64,
    #[arg(long, default_value_t = 0.0)]
    chi: f64,
    #[arg(long, default_value_t = 0.0)]
    k: f64,
    #[arg(long, default_value_t = 2)]
    honest: usize,
    #[arg(long, default_value_t = 0.0)]
    p_ec: f64,
}

impl BoundArgs {
    fn inputs(&self) -> BoundInputs {
        BoundInputs {
            n: self.n,
            l: if self.l > 0.0 { self.l } else { self.m + self.tau },
            m: self.m,
            tau: self.tau,
            tau_prime: self.tau_prime,
            delta: self.delta,
            nu: self.nu,
            mu: self.mu,
            q: self.q,
            eta: self.eta,
            chi: self.chi,
            k: self.k,
            honest: self.honest,
            p_ec: self.p_ec,
        }
    }
}

#[derive(Subcommand)]
enum CalcCommand {
    /// Security bound at given sizes.
    Eps(BoundArgs),
    /// Honest abort probability bound.
    Abort(BoundArgs),
    /// Largest share length within a target epsilon.
    KeyLength {
        #[command(flatten)]
        bounds: BoundArgs,
        #[arg(long)]
        target_eps: f64,
    },
    /// Rounds needed for a share length at a target epsilon.
    Rounds {
        #[arg(long)]
        k: f64,
        #[arg(long)]
        target_eps: f64,
        #[arg(long, default_value_t = 0.03)]
        delta: f64,
        #[arg(long, default_value_t = 0.01)]
        nu: f64,
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        #[arg(long, default_value_t = 32.0)]
        eta: f64,
        #[arg(long, default_value_t = 0.2)]
        overhead: f64,
        #[arg(long, default_value_t = 2)]
        honest: usize,
        #[arg(long, default_value_t = 0.0)]
        p_ec: f64,
    },
}

enum Failure {
    Io(String),
    Invalid(String),
    Aborted(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Io(e) => Failure::Io(e.to_string()),
            other => Failure::Invalid(other.to_string()),
        }
    }
}

impl From<AppError> for Failure {
    fn from(e: AppError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn invalid(msg: impl ToString) -> Failure {
    Failure::Invalid(msg.to_string())
}

fn print_json(value: &serde_json::Value) {
    // a closed pipe downstream is not an error worth reporting
    let _ = writeln!(io::stdout(), "{}", serde_json::to_string_pretty(value).expect("json value"));
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    Ok(match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    })
}

fn experiment_config(args: &ExperimentArgs) -> Result<ExperimentConfig, Failure> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(r) = args.repetitions {
        config.repetitions = r;
    }
    if let Some(out) = &args.out {
        config.output = Some(out.clone());
    }
    if let Some(f) = args.format {
        config.format = match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Both => ReportFormat::Both,
        };
    }
    Ok(config)
}

fn summary(report: &ExperimentReport) -> serde_json::Value {
    json!({
        "aggregates": report.aggregates,
        "checks": report.checks,
        "eps_total": report.eps_total,
    })
}

fn experiment(config: &ExperimentConfig, save_shares: Option<&Path>) -> Result<(), Failure> {
    let runs = run_sessions(config)?;
    if let Some(path) = save_shares {
        let mut out = io::BufWriter::new(fs::File::create(path)?);
        for (summary, outcome) in &runs {
            if let Ok(set) = ShareSet::from_outcome(summary.index, outcome) {
                writeln!(out, "{}", serde_json::to_string(&set).expect("share set"))?;
            }
        }
        out.flush()?;
    }
    let report = build_report(config, runs.into_iter().map(|(s, _)| s).collect(), None)?;
    if let Some(dir) = &config.output {
        for path in emit_report(&report, dir, config.format)? {
            eprintln!("wrote {}", path.display());
        }
    }
    print_json(&summary(&report));
    if config.repetitions == 1 {
        if let Some(stage) = report.runs[0].stats.abort {
            return Err(Failure::Aborted(format!("session aborted at {stage}")));
        }
    }
    Ok(())
}

fn read_share_sets(path: &Path) -> Result<Vec<ShareSet>, Failure> {
    let file = fs::File::open(path)?;
    io::BufReader::new(file)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|line| serde_json::from_str(&line?).map_err(invalid))
        .collect()
}

fn parse_bits(s: &str) -> Result<Bits, Failure> {
    if s.contains(':') {
        Bits::from_hex(s).map_err(invalid)
    } else {
        Bits::from_bit_str(s).ok_or_else(|| invalid(format!("`{s}` is neither <len>:<hex> nor a 0/1 string")))
    }
}

fn pick(sets: &[ShareSet], index: usize) -> Result<&ShareSet, Failure> {
    sets.get(index)
        .ok_or_else(|| invalid(format!("share set {index} requested, file holds {}", sets.len())))
}

fn calc(cmd: CalcCommand) -> Result<(), Failure> {
    match cmd {
        CalcCommand::Eps(b) => {
            let x = b.inputs();
            let e = eps_qkd_prime(&x).map_err(invalid)?;
            let total = eps_total(x.honest, e.eps_qkd, x.eta).map_err(invalid)?;
            print_json(&json!({ "inputs": x, "breakdown": e, "eps_total": total }));
        }
        CalcCommand::Abort(b) => {
            let x = b.inputs();
            print_json(&json!({ "inputs": x, "abort": abort_bound(&x).map_err(invalid)? }));
        }
        CalcCommand::KeyLength { bounds, target_eps } => {
            let x = bounds.inputs();
            print_json(&json!({ "inputs": x, "key_length": solve_key_length(&x, target_eps).map_err(invalid)? }));
        }
        CalcCommand::Rounds { k, target_eps, delta, nu, mu, eta, overhead, honest, p_ec } => {
            let r = RoundCountInputs { k, target_eps, delta, nu, mu, eta, overhead, honest, p_ec };
            print_json(&json!({ "solution": solve_round_count(&r).map_err(invalid)? }));
        }
    }
    Ok(())
}

fn trace(args: TraceArgs) -> Result<(), Failure> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    let params = config.params()?;
    let attack = config.attack_spec()?;
    let seed = derive_run_seed(config.seed, args.index);
    let outcome = run_session(&params, config.variant, &attack, seed).map_err(invalid)?;
    match &args.out {
        Some(path) => outcome.transcript.write_lines(io::BufWriter::new(fs::File::create(path)?))?,
        None => outcome.transcript.write_lines(io::stdout().lock())?,
    }
    eprintln!("{}", serde_json::to_string(&json!({ "seed": seed, "stats": outcome.stats })).expect("stats"));
    match outcome.stats.abort {
        Some(stage) => Err(Failure::Aborted(format!("session aborted at {stage}"))),
        None => Ok(()),
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(args) => {
            let config = experiment_config(&args.experiment)?;
            experiment(&config, args.experiment.save_shares.as_deref())
        }
        Command::Attack(args) => {
            let mut config = experiment_config(&args.experiment)?;
            config.attack_link = Some(args.link);
            match args.kind {
                AttackArg::PhaseFlip => {
                    config.attack = AttackKind::PhaseFlip;
                    config.attack_mu = args.flip;
                }
                AttackArg::InterceptResend => {
                    config.attack = AttackKind::InterceptResend;
                    config.attack_policy = match args.policy {
                        PolicyArg::Hadamard => InterceptPolicy::Hadamard,
                        PolicyArg::Circular => InterceptPolicy::Circular,
                        PolicyArg::Uniform => InterceptPolicy::Uniform,
                        PolicyArg::Oracle => InterceptPolicy::Oracle,
                    };
                }
            }
            experiment(&config, args.experiment.save_shares.as_deref())
        }
        Command::Calc(cmd) => calc(cmd),
        Command::Share(args) => {
            let sets = read_share_sets(&args.input.shares)?;
            let set = pick(&sets, args.index)?;
            let secret = match &args.secret {
                Some(s) => parse_bits(s)?,
                None => Bits::zeros(set.key_len),
            };
            let mut channel = Channel::new(set.players, stream(args.input.seed, Stream::Channel));
            let ciphertext = share_message(args.dealer, &secret, set, &mut channel)?;
            let recovered = reconstruct(args.dealer, &ciphertext, set)?;
            print_json(&json!({
                "session": set.session_id,
                "ciphertext": ciphertext,
                "reconstructed": recovered,
                "round_trip": recovered == secret,
            }));
            Ok(())
        }
        Command::Veto(args) => {
            let sets = read_share_sets(&args.input.shares)?;
            let flags: Vec<bool> = parse_bits(&args.flags)?.to_bools();
            let players = flags.len();
            let mut channel = Channel::new(players, stream(args.input.seed, Stream::Channel));
            let mut rng = stream(args.input.seed, Stream::Application);
            let out = anonymous_veto(&sets, &flags, &mut channel, &mut rng)?;
            print_json(&json!({ "veto": out.veto, "rounds": out.rounds }));
            Ok(())
        }
        Command::Keyex(args) => {
            let sets = read_share_sets(&args.input.shares)?;
            let set = pick(&sets, args.index)?;
            let mut channel = Channel::new(set.players, stream(args.input.seed, Stream::Channel));
            let (ka, kb) = establish_key(set, args.a, args.b, &mut channel)?;
            print_json(&json!({ "session": set.session_id, "key_a": ka, "key_b": kb, "equal": ka == kb }));
            Ok(())
        }
        Command::Trace(args) => trace(args),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Aborted(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(3)
        }
    }
}
