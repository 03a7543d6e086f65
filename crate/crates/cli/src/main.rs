//! `stegogame`: coverless steganography toolkit and security-evaluation harness.
//!
//! Every subcommand prints one JSON report on stdout. Domain errors print
//! `{"error": <kind>, "message": ...}` and exit 1; usage errors exit 2.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

use stegogame_core::attackgame::{
    acca_loop, message_recovery_game, run_game, Adversary, AttackLevel, CcaReplay, GameResult,
    GameVerdict, HistogramDetector, KcaMembership, MessageRecovery, RandomGuesser, Scenario,
    ScenarioFile,
};
use stegogame_core::divergence::{
    calibrate_epsilon, distinguishability_test, parse_samples, DistanceReport, Metric, NullConfig,
    Verdict,
};
use stegogame_core::library::collect_cover_files;
use stegogame_core::stego::{keygen_for, EntropySource, OsEntropy, SeededEntropy};
use stegogame_core::{
    budget, build_library, embed, extract, permcodec, BitString, CoverLibrary, Error, Message,
    Result, StegoKey, StegoSequence,
};

const THREADS_ENV: &str = "STEGOGAME_THREADS";

#[derive(Parser)]
#[command(
    name = "stegogame",
    version,
    about = "Coverless steganography toolkit and steganalysis game harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Hash cover files into a canonical library manifest
    BuildLibrary(BuildLibraryArgs),
    /// Arrangement count r and payload bits l for a library of T covers
    Capacity(CapacityArgs),
    /// Draw a fresh l-bit stego key
    Keygen(KeygenArgs),
    /// Hide a hex message as one or more cover sequences
    Embed(EmbedArgs),
    /// Recover the message from a sequence file
    Extract(ExtractArgs),
    /// Coverage probability and safe number of uses
    Budget(BudgetArgs),
    /// Distance between two sample sets with an epsilon verdict
    Divergence(DivergenceArgs),
    /// Run a steganalysis game against the coverless scheme
    Attack(AttackArgs),
}

#[derive(Args, Serialize)]
struct BuildLibraryArgs {
    /// Cover files or directories (one level deep)
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct CapacityArgs {
    #[arg(short = 'T')]
    #[serde(rename = "T")]
    t: usize,
    #[arg(short = 'N')]
    #[serde(rename = "N")]
    n: usize,
}

#[derive(Args, Serialize)]
struct KeygenArgs {
    #[arg(short = 'T')]
    #[serde(rename = "T")]
    t: usize,
    #[arg(short = 'N')]
    #[serde(rename = "N")]
    n: usize,
    #[arg(short, long)]
    output: PathBuf,
    /// Deterministic key stream for tests; omit for OS entropy
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Serialize)]
struct EmbedArgs {
    /// Message as hex digits
    #[arg(short, long)]
    message: String,
    #[arg(short, long)]
    key: PathBuf,
    /// Library manifest
    #[arg(short = 'x', long)]
    library: PathBuf,
    #[arg(short = 'N')]
    #[serde(rename = "N")]
    n: usize,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct ExtractArgs {
    #[arg(short, long)]
    sequence: PathBuf,
    #[arg(short, long)]
    key: PathBuf,
    #[arg(short = 'x', long)]
    library: PathBuf,
    /// Keep only the first BITS recovered bits (undoes segment padding)
    #[arg(long)]
    bits: Option<usize>,
}

#[derive(Args, Serialize)]
struct BudgetArgs {
    #[arg(short = 'T')]
    #[serde(rename = "T")]
    t: usize,
    #[arg(short = 'N')]
    #[serde(rename = "N")]
    n: usize,
    #[arg(long)]
    zeta: f64,
    /// Observed sequences to evaluate at; defaults to the safe maximum
    #[arg(long)]
    x: Option<u64>,
    #[arg(long)]
    mc_trials: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum MetricArg {
    Kl,
    Js,
    Tv,
    W1,
    All,
}

#[derive(Args, Serialize)]
struct DivergenceArgs {
    #[arg(short, value_name = "SAMPLES")]
    a: PathBuf,
    #[arg(short, value_name = "SAMPLES")]
    b: PathBuf,
    #[arg(long, value_enum, default_value = "js")]
    metric: MetricArg,
    /// A finite threshold, or `auto` for the permutation-null percentile
    #[arg(long, default_value = "auto")]
    epsilon: String,
    #[arg(long, default_value_t = 32)]
    bins: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 999)]
    resamples: usize,
    #[arg(long, default_value_t = 0.99)]
    percentile: f64,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Scheme {
    Coverless,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum LevelArg {
    Scoa,
    Kca,
    Cca,
    Acca,
}

impl From<LevelArg> for AttackLevel {
    fn from(l: LevelArg) -> Self {
        match l {
            LevelArg::Scoa => AttackLevel::Scoa,
            LevelArg::Kca => AttackLevel::Kca,
            LevelArg::Cca => AttackLevel::Cca,
            LevelArg::Acca => AttackLevel::Acca,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum AdversaryArg {
    Random,
    Histogram,
    KcaMembership,
    CcaReplay,
    Recovery,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum GameArg {
    Detection,
    MessageRecovery,
}

#[derive(Args, Serialize)]
struct AttackArgs {
    #[arg(long, value_enum, default_value = "coverless")]
    scheme: Scheme,
    #[arg(long, value_enum)]
    level: LevelArg,
    #[arg(long, value_enum)]
    adversary: AdversaryArg,
    /// Trials, or trials per round at the acca level
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    scenario: PathBuf,
    /// Defaults to message-recovery for the recovery adversary
    #[arg(long, value_enum)]
    game: Option<GameArg>,
    /// Overrides the scenario's round count at the acca level
    #[arg(long)]
    rounds: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(report) => {
            println!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            println!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&n| n >= 1).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "{THREADS_ENV} must be a positive integer, got '{raw}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidConfig(e.to_string()))
}

fn run(command: Command) -> Result<Value> {
    configure_threads()?;
    match command {
        Command::BuildLibrary(a) => report("build-library", &a, None, cmd_build_library(&a)?),
        Command::Capacity(a) => report(
            "capacity",
            &a,
            None,
            to_value(&permcodec::capacity(a.t, a.n)?),
        ),
        Command::Keygen(a) => report("keygen", &a, a.seed, cmd_keygen(&a)?),
        Command::Embed(a) => report("embed", &a, None, cmd_embed(&a)?),
        Command::Extract(a) => report("extract", &a, None, cmd_extract(&a)?),
        Command::Budget(a) => {
            let seed = a.mc_trials.map(|_| a.seed);
            report("budget", &a, seed, cmd_budget(&a)?)
        }
        Command::Divergence(a) => {
            let seed = (a.epsilon == "auto").then_some(a.seed);
            report("divergence", &a, seed, cmd_divergence(&a)?)
        }
        Command::Attack(a) => report("attack", &a, Some(a.seed), cmd_attack(&a)?),
    }
}

/// Wraps a result object as `{subcommand, version, params, seed, ...result}`.
fn report(
    subcommand: &str,
    params: &impl Serialize,
    seed: Option<u64>,
    result: Value,
) -> Result<Value> {
    let mut out = Map::new();
    out.insert("subcommand".into(), json!(subcommand));
    out.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    out.insert("params".into(), to_value(params));
    out.insert("seed".into(), json!(seed));
    match result {
        Value::Object(fields) => out.extend(fields),
        other => {
            out.insert("result".into(), other);
        }
    }
    Ok(Value::Object(out))
}

fn to_value(v: &impl Serialize) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn cmd_build_library(a: &BuildLibraryArgs) -> Result<Value> {
    // absolute paths keep the manifest usable from any working directory
    let files = collect_cover_files(&a.inputs)?
        .into_iter()
        .map(|p| fs::canonicalize(&p).map_err(|e| Error::Io { path: p, source: e }))
        .collect::<Result<Vec<_>>>()?;
    let lib = build_library(&files)?;
    lib.save(&a.output)?;
    Ok(json!({ "T": lib.len(), "output": a.output }))
}

fn cmd_keygen(a: &KeygenArgs) -> Result<Value> {
    let entropy: Box<dyn EntropySource> = match a.seed {
        Some(seed) => Box::new(SeededEntropy::new(seed)),
        None => Box::new(OsEntropy),
    };
    let key = keygen_for(a.t, a.n, entropy.as_ref())?;
    key.save(&a.output)?;
    Ok(json!({
        "l": key.len(),
        "entropy": if a.seed.is_some() { "seeded" } else { "os" },
        "output": a.output,
    }))
}

/// A message of exactly `ceil(l/4)` hex digits whose value fits in `l` bits is
/// one block; anything else is read as `4 * digits` bits and cut into `l`-bit
/// blocks, the last one zero-padded.
fn message_blocks(hex: &str, l: usize) -> Result<(usize, Vec<BitString>)> {
    let digits = hex.len();
    if digits == 0 {
        return Err(Error::Parse("empty message".into()));
    }
    if digits == l.div_ceil(4) {
        if let Ok(bits) = BitString::from_hex(hex, l) {
            return Ok((l, vec![bits]));
        }
    }
    let bits = BitString::from_hex(hex, 4 * digits)?;
    Ok((bits.len(), bits.segment(l)))
}

fn cmd_embed(a: &EmbedArgs) -> Result<Value> {
    let lib = CoverLibrary::load(&a.library)?;
    let key = StegoKey::load(&a.key)?;
    let l = permcodec::capacity(lib.len(), a.n)?.l as usize;
    let (message_bits, blocks) = message_blocks(&a.message, l)?;
    let sequences = blocks
        .into_iter()
        .map(|b| embed(&Message::new(b), &key, &lib, a.n))
        .collect::<Result<Vec<_>>>()?;
    let text: String = sequences.iter().map(|s| s.to_json() + "\n").collect();
    write_text(&a.output, &text)?;
    Ok(json!({
        "l": l,
        "message_bits": message_bits,
        "segments": sequences.len(),
        "output": a.output,
    }))
}

/// One sequence object, or newline-delimited sequences for segmented messages.
fn read_sequences(path: &Path) -> Result<Vec<StegoSequence>> {
    let text = read_text(path)?;
    if let Ok(seq) = StegoSequence::from_json(text.trim()) {
        return Ok(vec![seq]);
    }
    let seqs = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(StegoSequence::from_json)
        .collect::<Result<Vec<_>>>()?;
    if seqs.is_empty() {
        return Err(Error::Parse(format!(
            "{} holds no sequences",
            path.display()
        )));
    }
    Ok(seqs)
}

fn cmd_extract(a: &ExtractArgs) -> Result<Value> {
    let lib = CoverLibrary::load(&a.library)?;
    let key = StegoKey::load(&a.key)?;
    let blocks = read_sequences(&a.sequence)?
        .iter()
        .map(|s| extract(s, &key, &lib).map(|m| m.bits().clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut message = BitString::concat(&blocks);
    if let Some(bits) = a.bits {
        if bits > message.len() {
            return Err(Error::InvalidParams(format!(
                "asked for {bits} bits but only {} were recovered",
                message.len()
            )));
        }
        message = BitString::from_bits(message.bits()[..bits].to_vec());
    }
    Ok(json!({
        "l": key.len(),
        "segments": blocks.len(),
        "message_bits": message.len(),
        "message": message.to_hex(),
    }))
}

fn cmd_budget(a: &BudgetArgs) -> Result<Value> {
    let r = budget::coverage_report(a.n, a.t, a.zeta, a.x, a.mc_trials.map(|t| (t, a.seed)))?;
    if r.p_published_out_of_range {
        eprintln!(
            "warning: published coverage formula gives {} at x={}, outside [0, 1]; use p_exact",
            r.p_published, r.x
        );
    }
    Ok(to_value(&r))
}

fn metric_of(m: MetricArg) -> Option<Metric> {
    match m {
        MetricArg::Kl => Some(Metric::Kl),
        MetricArg::Js => Some(Metric::Js),
        MetricArg::Tv => Some(Metric::Tv),
        MetricArg::W1 => Some(Metric::W1),
        MetricArg::All => None,
    }
}

fn cmd_divergence(a: &DivergenceArgs) -> Result<Value> {
    let xs = parse_samples(&read_text(&a.a)?)?;
    let ys = parse_samples(&read_text(&a.b)?)?;
    let fixed = match a.epsilon.as_str() {
        "auto" => None,
        s => Some(s.parse::<f64>().map_err(|_| {
            Error::InvalidParams(format!("epsilon must be a number or 'auto', got '{s}'"))
        })?),
    };
    let null = NullConfig {
        resamples: a.resamples,
        percentile: a.percentile,
        seed: a.seed,
    };
    let one = |metric: Metric| -> Result<DistanceReport> {
        let eps = match fixed {
            Some(e) => e,
            None => calibrate_epsilon(&xs, &ys, metric, a.bins, null)?,
        };
        let r = distinguishability_test(&xs, &ys, eps, metric, a.bins)?;
        eprintln!("{metric}: {:.6} s", r.elapsed_secs);
        Ok(r)
    };
    let source = if fixed.is_some() { "given" } else { "auto" };
    match metric_of(a.metric) {
        Some(m) => {
            let mut v = to_value(&one(m)?);
            v["epsilon_source"] = json!(source);
            Ok(v)
        }
        None => {
            let reports = Metric::ALL
                .iter()
                .map(|&m| one(m))
                .collect::<Result<Vec<_>>>()?;
            let verdict = if reports
                .iter()
                .any(|r| r.verdict == Verdict::Distinguishable)
            {
                Verdict::Distinguishable
            } else {
                Verdict::IndistinguishableAtEpsilon
            };
            Ok(json!({ "verdict": verdict, "epsilon_source": source, "reports": reports }))
        }
    }
}

fn cmd_attack(a: &AttackArgs) -> Result<Value> {
    let (scenario, file) = Scenario::load(&a.scenario)?;
    match a.adversary {
        AdversaryArg::Random => play(RandomGuesser, a, &scenario, &file),
        AdversaryArg::Histogram => play(HistogramDetector::default(), a, &scenario, &file),
        AdversaryArg::KcaMembership => play(KcaMembership::new(file.tau), a, &scenario, &file),
        AdversaryArg::CcaReplay => play(CcaReplay::default(), a, &scenario, &file),
        AdversaryArg::Recovery => play(MessageRecovery::default(), a, &scenario, &file),
    }
}

fn play<A: Adversary + Clone + Sync>(
    mut adversary: A,
    a: &AttackArgs,
    scenario: &Scenario,
    file: &ScenarioFile,
) -> Result<Value> {
    let level = AttackLevel::from(a.level);
    let game = a.game.unwrap_or(if a.adversary == AdversaryArg::Recovery {
        GameArg::MessageRecovery
    } else {
        GameArg::Detection
    });
    let result: GameResult = match (game, level) {
        (GameArg::MessageRecovery, _) => {
            message_recovery_game(scenario, &adversary, level, a.trials, a.seed)?
        }
        (GameArg::Detection, AttackLevel::Acca) => {
            let rounds = a.rounds.unwrap_or(file.rounds);
            let results = acca_loop(scenario, &mut adversary, rounds, a.trials, a.seed)?;
            let last = results.last().expect("at least one round");
            let broken_at = (last.verdict == GameVerdict::Broken).then_some(last.round);
            return Ok(json!({
                "game": last.game,
                "level": level,
                "adversary": last.adversary,
                "verdict": last.verdict,
                "broken_at_round": broken_at,
                "rounds": results,
            }));
        }
        (GameArg::Detection, _) => run_game(scenario, &adversary, level, a.trials, a.seed)?,
    };
    Ok(to_value(&result))
}
