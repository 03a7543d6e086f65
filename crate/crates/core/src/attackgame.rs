//! Steganalysis game against the coverless scheme.
//!
//! Every trial is a learning phase followed by a challenge phase. During
//! learning the adversary receives the knowledge its attack level entitles it
//! to; at CCA and above it may also query embed/extract oracles under the
//! session key, within a fixed call budget. In the challenge phase a fair coin
//! decides whether it is shown a fresh stego-sequence or a natural sequence of
//! covers, and it must say which. Success above one half is judged with a
//! one-sided exact binomial test.
//!
//! Knowledge is nested by construction: the harness draws the same channel
//! traffic, leak and challenge for a given `(seed, trial)` at every level and
//! only masks what a lower level may not see.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Binomial, ContinuousCDF, DiscreteCDF};

use crate::bits::BitString;
use crate::divergence::{byte_histogram, js, EmpiricalDistribution};
use crate::error::{Error, Result};
use crate::library::{read_contents, CoverEntry, CoverId, CoverLibrary};
use crate::permcodec;
use crate::rng::{derive_seed, trial_rng, TrialRng};
use crate::stego::{self, keygen, Message, RngEntropy, StegoKey, StegoSequence};

const HARNESS_STREAM: u64 = 0x4841_524e;
const ADVERSARY_STREAM: u64 = 0x4144_5652;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackLevel {
    /// Stego-cover only.
    Scoa,
    /// Known cover: part of the library has leaked.
    Kca,
    /// Chosen cover: bounded embed/extract oracle access.
    Cca,
    /// Adaptive chosen cover: repeated learn/challenge rounds.
    Acca,
}

impl AttackLevel {
    pub const ALL: [AttackLevel; 4] = [
        AttackLevel::Scoa,
        AttackLevel::Kca,
        AttackLevel::Cca,
        AttackLevel::Acca,
    ];
}

impl fmt::Display for AttackLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackLevel::Scoa => "scoa",
            AttackLevel::Kca => "kca",
            AttackLevel::Cca => "cca",
            AttackLevel::Acca => "acca",
        })
    }
}

impl FromStr for AttackLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scoa" => Ok(AttackLevel::Scoa),
            "kca" => Ok(AttackLevel::Kca),
            "cca" => Ok(AttackLevel::Cca),
            "acca" => Ok(AttackLevel::Acca),
            other => Err(Error::Parse(format!("unknown attack level '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Stego,
    Natural,
}

/// Extra key material handed to the adversary, for calibrating recovery
/// attacks against known ceilings.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyExposure {
    #[default]
    None,
    Full,
    OneBitFlipped,
}

/// Cover contents by id.
#[derive(Clone, Debug, Default)]
pub struct CoverStore {
    contents: HashMap<CoverId, Arc<[u8]>>,
}

impl CoverStore {
    pub fn insert(&mut self, bytes: &[u8]) -> CoverId {
        let id = CoverId::of_bytes(bytes);
        self.contents.entry(id).or_insert_with(|| Arc::from(bytes));
        id
    }

    pub fn get(&self, id: &CoverId) -> Option<&[u8]> {
        self.contents.get(id).map(|b| &b[..])
    }

    pub fn len(&self) -> usize {
        self.contents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contents.is_empty()
    }
}

/// Everything the harness needs to stage games against one library.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub library: CoverLibrary,
    /// Covers an innocent sender would pick from.
    pub world_pool: Vec<CoverId>,
    pub store: CoverStore,
    pub n: usize,
    /// Fraction of the library leaked at KCA and above.
    pub leak_fraction: f64,
    /// Added to the leak fraction after every ACCA round.
    pub leak_growth: f64,
    /// Stego-sequences observed on the channel during learning.
    pub observed_sequences: usize,
    pub embed_budget: usize,
    pub extract_budget: usize,
    pub alpha: f64,
    pub key_exposure: KeyExposure,
}

impl Scenario {
    /// Scenario over in-memory covers, with the default budgets.
    pub fn from_blobs(library: &[Vec<u8>], world_pool: &[Vec<u8>], n: usize) -> Result<Self> {
        let mut store = CoverStore::default();
        let entries = library
            .iter()
            .map(|b| CoverEntry {
                id: store.insert(b),
                path: String::new(),
                bytes: b.len() as u64,
            })
            .collect();
        let library = CoverLibrary::from_entries(entries)?;
        let world_pool = world_pool.iter().map(|b| store.insert(b)).collect();
        let scenario = Scenario {
            library,
            world_pool,
            store,
            n,
            leak_fraction: 0.0,
            leak_growth: 0.0,
            observed_sequences: 8,
            embed_budget: 64,
            extract_budget: 64,
            alpha: 0.01,
            key_exposure: KeyExposure::None,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.library.len();
        if self.n < 1 || self.n > t {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= N <= T = {t}, got N = {}",
                self.n
            )));
        }
        let distinct: HashSet<_> = self.world_pool.iter().collect();
        if distinct.len() != self.world_pool.len() {
            return Err(Error::InvalidConfig(
                "world pool lists a cover twice".into(),
            ));
        }
        if self.world_pool.len() < self.n {
            return Err(Error::InvalidConfig(format!(
                "world pool has {} covers, fewer than N = {}",
                self.world_pool.len(),
                self.n
            )));
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.leak_fraction) || !(self.leak_growth >= 0.0 && self.leak_growth.is_finite()) {
            return Err(Error::InvalidConfig(
                "leak fraction must be in [0, 1] and leak growth non-negative".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Payload bits per sequence.
    pub fn key_bits(&self) -> usize {
        permcodec::capacity(self.library.len(), self.n)
            .expect("validated")
            .l as usize
    }

    fn leak_size(&self, fraction: f64) -> usize {
        let t = self.library.len();
        ((fraction.min(1.0) * t as f64).round() as usize).min(t)
    }

    /// Loads the JSON scenario file; manifest paths resolve against its
    /// directory. The parsed file is returned for its game-level settings.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, ScenarioFile)> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ScenarioFile =
            serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let lib_path = base.join(&file.library);
        let pool_path = base.join(&file.world_pool);
        let library = CoverLibrary::load(&lib_path)?;
        let pool = CoverLibrary::load(&pool_path)?;
        let mut store = CoverStore::default();
        for (lib, manifest) in [(&library, &lib_path), (&pool, &pool_path)] {
            let dir = manifest.parent().unwrap_or(Path::new(""));
            for (id, bytes) in read_contents(lib, dir)? {
                store.contents.insert(id, Arc::from(bytes));
            }
        }
        let scenario = Scenario {
            world_pool: pool.ids().collect(),
            library,
            store,
            n: file.n,
            leak_fraction: file.leak_fraction,
            leak_growth: file.leak_growth,
            observed_sequences: file.observed_sequences,
            embed_budget: file.embed_budget,
            extract_budget: file.extract_budget,
            alpha: file.alpha,
            key_exposure: file.key_exposure,
        };
        scenario.validate()?;
        if !(0.0..=1.0).contains(&file.tau) || file.rounds == 0 {
            return Err(Error::InvalidConfig(
                "tau must be in [0, 1] and rounds >= 1".into(),
            ));
        }
        Ok((scenario, file))
    }
}

/// On-disk scenario description.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub library: String,
    pub world_pool: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default)]
    pub leak_fraction: f64,
    #[serde(default)]
    pub leak_growth: f64,
    #[serde(default = "default_budget")]
    pub embed_budget: usize,
    #[serde(default = "default_budget")]
    pub extract_budget: usize,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_observed")]
    pub observed_sequences: usize,
    #[serde(default)]
    pub key_exposure: KeyExposure,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_budget() -> usize {
    64
}
fn default_rounds() -> usize {
    5
}
fn default_observed() -> usize {
    8
}
fn default_alpha() -> f64 {
    0.01
}
fn default_tau() -> f64 {
    1.0
}

/// What the adversary is told during a learning phase.
#[derive(Clone, Debug)]
pub struct Knowledge<'a> {
    pub level: AttackLevel,
    pub n: usize,
    pub key_bits: usize,
    /// Stego traffic seen on the public channel.
    pub channel: Vec<StegoSequence>,
    pub world_pool: &'a [CoverId],
    pub store: &'a CoverStore,
    /// Library covers known to the adversary (KCA and above), canonical order.
    pub leaked: Vec<CoverId>,
    pub key_hint: Option<StegoKey>,
}

/// Embed/extract access under the session key, metered per learning phase.
pub struct Oracles<'a> {
    library: &'a CoverLibrary,
    key: &'a StegoKey,
    n: usize,
    embed_left: usize,
    extract_left: usize,
    embed_budget: usize,
    extract_budget: usize,
}

impl<'a> Oracles<'a> {
    fn new(scenario: &'a Scenario, key: &'a StegoKey, level: AttackLevel) -> Self {
        let (e, x) = if level >= AttackLevel::Cca {
            (scenario.embed_budget, scenario.extract_budget)
        } else {
            (0, 0)
        };
        Oracles {
            library: &scenario.library,
            key,
            n: scenario.n,
            embed_left: e,
            extract_left: x,
            embed_budget: e,
            extract_budget: x,
        }
    }

    pub fn embed_remaining(&self) -> usize {
        self.embed_left
    }

    pub fn extract_remaining(&self) -> usize {
        self.extract_left
    }

    pub fn embed(&mut self, m: &BitString) -> Result<StegoSequence> {
        if self.embed_left == 0 {
            return Err(Error::OracleBudgetExceeded {
                oracle: "embed",
                budget: self.embed_budget,
            });
        }
        self.embed_left -= 1;
        stego::embed(&Message::new(m.clone()), self.key, self.library, self.n)
    }

    /// Errors exactly as [`stego::extract`] does on forged sequences.
    pub fn extract(&mut self, seq: &StegoSequence) -> Result<Message> {
        if self.extract_left == 0 {
            return Err(Error::OracleBudgetExceeded {
                oracle: "extract",
                budget: self.extract_budget,
            });
        }
        self.extract_left -= 1;
        stego::extract(seq, self.key, self.library)
    }
}

/// The covers put in front of the adversary in the challenge phase.
#[derive(Clone, Copy, Debug)]
pub struct ChallengeView<'a> {
    pub ids: &'a [CoverId],
    pub store: &'a CoverStore,
}

pub trait Adversary: Send {
    fn name(&self) -> &'static str;

    /// Learning phase. State kept in `self` survives into later rounds of an
    /// adaptive game.
    fn learn(
        &mut self,
        knowledge: &Knowledge<'_>,
        oracles: &mut Oracles<'_>,
        rng: &mut TrialRng,
    ) -> Result<()>;

    fn guess(&mut self, challenge: &ChallengeView<'_>, rng: &mut TrialRng) -> Label;

    /// Best guess at the message in `seq`; `None` counts as all bits wrong.
    fn recover(
        &mut self,
        seq: &StegoSequence,
        key_bits: usize,
        rng: &mut TrialRng,
    ) -> Option<BitString> {
        let _ = (seq, key_bits, rng);
        None
    }
}

fn random_bits(len: usize, rng: &mut TrialRng) -> BitString {
    BitString::from_bits((0..len).map(|_| rng.gen()).collect())
}

/// Ignores everything and flips the harness-supplied coin.
#[derive(Clone, Debug, Default)]
pub struct RandomGuesser;

impl Adversary for RandomGuesser {
    fn name(&self) -> &'static str {
        "random"
    }

    fn learn(&mut self, _: &Knowledge<'_>, _: &mut Oracles<'_>, _: &mut TrialRng) -> Result<()> {
        Ok(())
    }

    fn guess(&mut self, _: &ChallengeView<'_>, rng: &mut TrialRng) -> Label {
        if rng.gen() {
            Label::Stego
        } else {
            Label::Natural
        }
    }

    fn recover(
        &mut self,
        _: &StegoSequence,
        key_bits: usize,
        rng: &mut TrialRng,
    ) -> Option<BitString> {
        Some(random_bits(key_bits, rng))
    }
}

/// Models natural covers by their pooled byte histogram and flags sequences
/// whose histogram sits further from the model than a typical natural one.
#[derive(Clone, Debug)]
pub struct HistogramDetector {
    /// Natural sequences sampled to set the decision threshold.
    pub calibration: usize,
    reference: Option<EmpiricalDistribution>,
    threshold: f64,
}

impl Default for HistogramDetector {
    fn default() -> Self {
        HistogramDetector {
            calibration: 64,
            reference: None,
            threshold: f64::INFINITY,
        }
    }
}

impl HistogramDetector {
    fn score(&self, ids: &[CoverId], store: &CoverStore) -> Option<f64> {
        let reference = self.reference.as_ref()?;
        let blobs = ids
            .iter()
            .map(|id| store.get(id))
            .collect::<Option<Vec<_>>>()?;
        let hist = byte_histogram(blobs).ok()?;
        js(&hist, reference).ok()
    }
}

impl Adversary for HistogramDetector {
    fn name(&self) -> &'static str {
        "histogram"
    }

    fn learn(&mut self, k: &Knowledge<'_>, _: &mut Oracles<'_>, rng: &mut TrialRng) -> Result<()> {
        let blobs = k
            .world_pool
            .iter()
            .map(|id| k.store.get(id))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::InvalidConfig("world pool content unavailable".into()))?;
        self.reference = Some(byte_histogram(blobs)?);
        let mut scores: Vec<f64> = (0..self.calibration.max(1))
            .filter_map(|_| {
                let pick: Vec<CoverId> = index::sample(rng, k.world_pool.len(), k.n)
                    .into_iter()
                    .map(|i| k.world_pool[i])
                    .collect();
                self.score(&pick, k.store)
            })
            .collect();
        scores.sort_by(f64::total_cmp);
        self.threshold = scores
            .get(scores.len() / 2)
            .copied()
            .unwrap_or(f64::INFINITY);
        Ok(())
    }

    fn guess(&mut self, c: &ChallengeView<'_>, _: &mut TrialRng) -> Label {
        match self.score(c.ids, c.store) {
            Some(s) if s > self.threshold => Label::Stego,
            _ => Label::Natural,
        }
    }
}

/// Says "stego" when at least `tau` of the challenge covers are known
/// library members.
#[derive(Clone, Debug)]
pub struct KcaMembership {
    pub tau: f64,
    known: HashSet<CoverId>,
}

impl KcaMembership {
    pub fn new(tau: f64) -> Self {
        KcaMembership {
            tau,
            known: HashSet::new(),
        }
    }
}

impl Default for KcaMembership {
    fn default() -> Self {
        Self::new(1.0)
    }
}

fn known_fraction(ids: &[CoverId], known: &HashSet<CoverId>) -> f64 {
    if ids.is_empty() {
        return 0.0;
    }
    ids.iter().filter(|id| known.contains(id)).count() as f64 / ids.len() as f64
}

impl Adversary for KcaMembership {
    fn name(&self) -> &'static str {
        "kca-membership"
    }

    fn learn(&mut self, k: &Knowledge<'_>, _: &mut Oracles<'_>, _: &mut TrialRng) -> Result<()> {
        self.known.extend(k.leaked.iter().copied());
        Ok(())
    }

    fn guess(&mut self, c: &ChallengeView<'_>, _: &mut TrialRng) -> Label {
        if !self.known.is_empty() && known_fraction(c.ids, &self.known) >= self.tau {
            Label::Stego
        } else {
            Label::Natural
        }
    }
}

/// Spends the embed budget on random messages; every output reveals library
/// members. Answers "stego" on a replayed output or when every challenge
/// cover is a known member.
#[derive(Clone, Debug, Default)]
pub struct CcaReplay {
    known: HashSet<CoverId>,
    outputs: HashSet<StegoSequence>,
}

impl Adversary for CcaReplay {
    fn name(&self) -> &'static str {
        "cca-replay"
    }

    fn learn(
        &mut self,
        k: &Knowledge<'_>,
        oracles: &mut Oracles<'_>,
        rng: &mut TrialRng,
    ) -> Result<()> {
        self.known.extend(k.leaked.iter().copied());
        while oracles.embed_remaining() > 0 {
            let seq = oracles.embed(&random_bits(k.key_bits, rng))?;
            self.known.extend(seq.ids().iter().copied());
            self.outputs.insert(seq);
        }
        Ok(())
    }

    fn guess(&mut self, c: &ChallengeView<'_>, _: &mut TrialRng) -> Label {
        let replay = self.outputs.contains(&StegoSequence::new(c.ids.to_vec()));
        if replay || (!self.known.is_empty() && known_fraction(c.ids, &self.known) >= 1.0) {
            Label::Stego
        } else {
            Label::Natural
        }
    }
}

/// Reads the payload through the public mapping. Needs the whole library
/// (a full leak) to index covers; uses the key hint when one is given and
/// otherwise assumes the all-zero key.
#[derive(Clone, Debug, Default)]
pub struct MessageRecovery {
    library: Option<CoverLibrary>,
    key: Option<StegoKey>,
}

impl Adversary for MessageRecovery {
    fn name(&self) -> &'static str {
        "recovery"
    }

    fn learn(&mut self, k: &Knowledge<'_>, _: &mut Oracles<'_>, _: &mut TrialRng) -> Result<()> {
        if k.leaked.len() >= 2 {
            let entries = k
                .leaked
                .iter()
                .map(|&id| CoverEntry {
                    id,
                    path: String::new(),
                    bytes: 0,
                })
                .collect();
            self.library = CoverLibrary::from_entries(entries).ok();
        }
        self.key = k.key_hint.clone();
        Ok(())
    }

    fn guess(&mut self, c: &ChallengeView<'_>, _: &mut TrialRng) -> Label {
        match &self.library {
            Some(lib) if c.ids.iter().all(|id| lib.contains(id)) => Label::Stego,
            _ => Label::Natural,
        }
    }

    fn recover(
        &mut self,
        seq: &StegoSequence,
        key_bits: usize,
        rng: &mut TrialRng,
    ) -> Option<BitString> {
        let Some(lib) = &self.library else {
            return Some(random_bits(key_bits, rng));
        };
        let arr = stego::sequence_arrangement(seq, lib).ok()?;
        let payload = permcodec::arrangement_to_bits(&arr).ok()?;
        match &self.key {
            Some(k) => payload.xor(k.bits()).ok(),
            None => Some(payload),
        }
    }
}

/// Drops all state before every learning phase.
#[derive(Clone, Debug)]
pub struct Resetting<A> {
    prototype: A,
    current: A,
}

impl<A: Clone> Resetting<A> {
    pub fn new(prototype: A) -> Self {
        Resetting {
            current: prototype.clone(),
            prototype,
        }
    }
}

impl<A: Adversary + Clone> Adversary for Resetting<A> {
    fn name(&self) -> &'static str {
        self.prototype.name()
    }

    fn learn(&mut self, k: &Knowledge<'_>, o: &mut Oracles<'_>, rng: &mut TrialRng) -> Result<()> {
        self.current = self.prototype.clone();
        self.current.learn(k, o, rng)
    }

    fn guess(&mut self, c: &ChallengeView<'_>, rng: &mut TrialRng) -> Label {
        self.current.guess(c, rng)
    }

    fn recover(
        &mut self,
        seq: &StegoSequence,
        key_bits: usize,
        rng: &mut TrialRng,
    ) -> Option<BitString> {
        self.current.recover(seq, key_bits, rng)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GameKind {
    Detection,
    MessageRecovery,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GameVerdict {
    Resists,
    Broken,
}

/// Outcome of a block of trials.
///
/// For the detection game `successes` counts correct labels. For message
/// recovery `successes` counts exact message matches, while the rate, test
/// and interval are computed over individual bits.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GameResult {
    pub game: GameKind,
    pub level: AttackLevel,
    pub adversary: String,
    pub trials: u64,
    pub successes: u64,
    pub success_rate: f64,
    /// One-sided exact binomial p-value against a rate of 1/2.
    pub p_value: f64,
    pub alpha: f64,
    /// Clopper-Pearson interval at confidence `1 - alpha`.
    pub ci_low: f64,
    pub ci_high: f64,
    pub verdict: GameVerdict,
    pub seed: u64,
    pub disqualified: u64,
    pub stego_challenges: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bits_total: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bits_agreed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub round: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leak_fraction: Option<f64>,
}

/// `P(X >= successes)` for `X ~ Binomial(trials, 1/2)`.
pub fn binomial_p_value(successes: u64, trials: u64) -> f64 {
    if successes == 0 || trials == 0 {
        return 1.0;
    }
    Binomial::new(0.5, trials)
        .expect("valid binomial")
        .sf(successes - 1)
}

/// Two-sided Clopper-Pearson interval at confidence `1 - alpha`.
pub fn clopper_pearson(successes: u64, trials: u64, alpha: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let (s, n) = (successes as f64, trials as f64);
    let lo = if successes == 0 {
        0.0
    } else {
        Beta::new(s, n - s + 1.0)
            .expect("valid beta")
            .inverse_cdf(alpha / 2.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        Beta::new(s + 1.0, n - s)
            .expect("valid beta")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    (lo, hi)
}

struct Judgement {
    rate: f64,
    p_value: f64,
    ci: (f64, f64),
    verdict: GameVerdict,
}

fn judge(successes: u64, trials: u64, alpha: f64) -> Judgement {
    let rate = if trials == 0 {
        0.0
    } else {
        successes as f64 / trials as f64
    };
    let p_value = binomial_p_value(successes, trials);
    Judgement {
        rate,
        p_value,
        ci: clopper_pearson(successes, trials, alpha),
        verdict: if p_value < alpha && rate > 0.5 {
            GameVerdict::Broken
        } else {
            GameVerdict::Resists
        },
    }
}

#[derive(Default, Clone, Copy)]
struct Outcome {
    success: bool,
    disqualified: bool,
    stego: bool,
    bits_agreed: u64,
    bits_total: u64,
}

/// Harness-side draws for one learning phase, made identically at every level.
struct Staging {
    key: StegoKey,
    channel: Vec<StegoSequence>,
    leaked: Vec<CoverId>,
    key_hint: Option<StegoKey>,
}

fn random_message(l: usize, rng: &mut TrialRng) -> BitString {
    random_bits(l, rng)
}

fn draw_key(l: usize, rng: &mut TrialRng) -> Result<StegoKey> {
    keygen(l, &RngEntropy::new(&mut *rng))
}

fn sorted_ids(lib: &CoverLibrary, mut indices: Vec<usize>) -> Vec<CoverId> {
    indices.sort_unstable();
    indices.into_iter().map(|i| lib.id_at(i)).collect()
}

fn stage(
    scenario: &Scenario,
    key: StegoKey,
    leak: Vec<CoverId>,
    rng: &mut TrialRng,
) -> Result<Staging> {
    let l = key.len();
    let channel = (0..scenario.observed_sequences)
        .map(|_| {
            let m = Message::new(random_message(l, rng));
            stego::embed(&m, &key, &scenario.library, scenario.n)
        })
        .collect::<Result<Vec<_>>>()?;
    let flip_at = rng.gen_range(0..l);
    let key_hint = match scenario.key_exposure {
        KeyExposure::None => None,
        KeyExposure::Full => Some(key.clone()),
        KeyExposure::OneBitFlipped => {
            let mut bits = key.bits().clone();
            bits.flip(flip_at);
            Some(StegoKey::from_bits(bits)?)
        }
    };
    Ok(Staging {
        key,
        channel,
        leaked: leak,
        key_hint,
    })
}

fn knowledge<'a>(scenario: &'a Scenario, staging: &Staging, level: AttackLevel) -> Knowledge<'a> {
    Knowledge {
        level,
        n: scenario.n,
        key_bits: staging.key.len(),
        channel: staging.channel.clone(),
        world_pool: &scenario.world_pool,
        store: &scenario.store,
        leaked: if level >= AttackLevel::Kca {
            staging.leaked.clone()
        } else {
            Vec::new()
        },
        key_hint: staging.key_hint.clone(),
    }
}

/// Draws a fair-coin challenge. Both candidates are always drawn so the
/// random stream does not depend on the coin.
fn challenge(
    scenario: &Scenario,
    key: &StegoKey,
    rng: &mut TrialRng,
) -> Result<(Label, Vec<CoverId>)> {
    let stego_seq = stego::embed(
        &Message::new(random_message(key.len(), rng)),
        key,
        &scenario.library,
        scenario.n,
    )?;
    let natural: Vec<CoverId> = index::sample(rng, scenario.world_pool.len(), scenario.n)
        .into_iter()
        .map(|i| scenario.world_pool[i])
        .collect();
    Ok(if rng.gen::<bool>() {
        (Label::Stego, stego_seq.ids().to_vec())
    } else {
        (Label::Natural, natural)
    })
}

fn check_trials(trials: u64) -> Result<()> {
    if trials < 100 {
        return Err(Error::InvalidConfig(format!(
            "need at least 100 trials, got {trials}"
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn play_detection<A: Adversary>(
    scenario: &Scenario,
    adversary: &mut A,
    level: AttackLevel,
    key: &StegoKey,
    staging: &Staging,
    harness: &mut TrialRng,
    adv_rng: &mut TrialRng,
    learn: bool,
) -> Result<Outcome> {
    if learn {
        let k = knowledge(scenario, staging, level);
        let mut oracles = Oracles::new(scenario, key, level);
        if adversary.learn(&k, &mut oracles, adv_rng).is_err() {
            // the challenge is still drawn so later trials see the same stream
            let (label, _) = challenge(scenario, key, harness)?;
            return Ok(Outcome {
                disqualified: true,
                stego: label == Label::Stego,
                ..Outcome::default()
            });
        }
    }
    let (label, ids) = challenge(scenario, key, harness)?;
    let view = ChallengeView {
        ids: &ids,
        store: &scenario.store,
    };
    let answer = adversary.guess(&view, adv_rng);
    Ok(Outcome {
        success: answer == label,
        stego: label == Label::Stego,
        ..Outcome::default()
    })
}

fn trial_streams(seed: u64, trial: u64) -> (TrialRng, TrialRng) {
    (
        trial_rng(derive_seed(seed, HARNESS_STREAM), trial),
        trial_rng(derive_seed(seed, ADVERSARY_STREAM), trial),
    )
}

fn stage_trial(scenario: &Scenario, harness: &mut TrialRng, leak_fraction: f64) -> Result<Staging> {
    let key = draw_key(scenario.key_bits(), harness)?;
    let t = scenario.library.len();
    let leak = sorted_ids(
        &scenario.library,
        index::sample(harness, t, scenario.leak_size(leak_fraction)).into_vec(),
    );
    stage(scenario, key, leak, harness)
}

fn assemble(
    game: GameKind,
    level: AttackLevel,
    adversary: &str,
    scenario: &Scenario,
    seed: u64,
    outcomes: &[Outcome],
) -> GameResult {
    let trials = outcomes.len() as u64;
    let successes = outcomes.iter().filter(|o| o.success).count() as u64;
    let (tested_s, tested_n, bits) = match game {
        GameKind::Detection => (successes, trials, None),
        GameKind::MessageRecovery => {
            let agreed = outcomes.iter().map(|o| o.bits_agreed).sum();
            let total = outcomes.iter().map(|o| o.bits_total).sum();
            (agreed, total, Some((total, agreed)))
        }
    };
    let j = judge(tested_s, tested_n, scenario.alpha);
    GameResult {
        game,
        level,
        adversary: adversary.to_owned(),
        trials,
        successes,
        success_rate: j.rate,
        p_value: j.p_value,
        alpha: scenario.alpha,
        ci_low: j.ci.0,
        ci_high: j.ci.1,
        verdict: j.verdict,
        seed,
        disqualified: outcomes.iter().filter(|o| o.disqualified).count() as u64,
        stego_challenges: outcomes.iter().filter(|o| o.stego).count() as u64,
        bits_total: bits.map(|b| b.0),
        bits_agreed: bits.map(|b| b.1),
        round: None,
        leak_fraction: None,
    }
}

/// Independent detection trials, each with a fresh session key and a fresh
/// copy of `adversary`.
pub fn run_game<A: Adversary + Clone + Sync>(
    scenario: &Scenario,
    adversary: &A,
    level: AttackLevel,
    trials: u64,
    seed: u64,
) -> Result<GameResult> {
    scenario.validate()?;
    check_trials(trials)?;
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let (mut harness, mut adv_rng) = trial_streams(seed, trial);
            let staging = stage_trial(scenario, &mut harness, scenario.leak_fraction)?;
            let mut adv = adversary.clone();
            play_detection(
                scenario,
                &mut adv,
                level,
                &staging.key,
                &staging,
                &mut harness,
                &mut adv_rng,
                true,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(
        GameKind::Detection,
        level,
        adversary.name(),
        scenario,
        seed,
        &outcomes,
    ))
}

/// Each trial shows the adversary one fresh stego-sequence and scores its
/// message guess by per-bit agreement.
pub fn message_recovery_game<A: Adversary + Clone + Sync>(
    scenario: &Scenario,
    adversary: &A,
    level: AttackLevel,
    trials: u64,
    seed: u64,
) -> Result<GameResult> {
    scenario.validate()?;
    check_trials(trials)?;
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let (mut harness, mut adv_rng) = trial_streams(seed, trial);
            let staging = stage_trial(scenario, &mut harness, scenario.leak_fraction)?;
            let l = staging.key.len();
            let m = random_message(l, &mut harness);
            let seq = stego::embed(
                &Message::new(m.clone()),
                &staging.key,
                &scenario.library,
                scenario.n,
            )?;
            let mut adv = adversary.clone();
            let k = knowledge(scenario, &staging, level);
            let mut oracles = Oracles::new(scenario, &staging.key, level);
            if adv.learn(&k, &mut oracles, &mut adv_rng).is_err() {
                return Ok(Outcome {
                    disqualified: true,
                    stego: true,
                    bits_total: l as u64,
                    ..Outcome::default()
                });
            }
            let guess = adv.recover(&seq, l, &mut adv_rng);
            let agreed = guess
                .as_ref()
                .and_then(|g| g.agreement(&m).ok())
                .unwrap_or(0) as u64;
            Ok(Outcome {
                success: guess.as_ref() == Some(&m),
                disqualified: false,
                stego: true,
                bits_agreed: agreed,
                bits_total: l as u64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(
        GameKind::MessageRecovery,
        level,
        adversary.name(),
        scenario,
        seed,
        &outcomes,
    ))
}

/// Adaptive game: one session key, one adversary whose state persists across
/// rounds. Each round opens a learning phase with fresh oracle budgets and a
/// leak grown by `leak_growth`, then plays `trials_per_round` challenges.
/// Stops after the first round judged broken.
pub fn acca_loop<A: Adversary>(
    scenario: &Scenario,
    adversary: &mut A,
    rounds: usize,
    trials_per_round: u64,
    seed: u64,
) -> Result<Vec<GameResult>> {
    scenario.validate()?;
    check_trials(trials_per_round)?;
    if rounds == 0 {
        return Err(Error::InvalidConfig("need at least one round".into()));
    }
    let level = AttackLevel::Acca;
    let t = scenario.library.len();
    let mut session = trial_rng(derive_seed(seed, HARNESS_STREAM), u64::MAX);
    let key = draw_key(scenario.key_bits(), &mut session)?;
    // leak order fixed for the session so each round's leak extends the last
    let leak_order = index::sample(&mut session, t, t).into_vec();

    let mut results = Vec::with_capacity(rounds);
    for round in 0..rounds {
        let (mut harness, mut adv_rng) = trial_streams(seed, round as u64);
        let fraction = (scenario.leak_fraction + round as f64 * scenario.leak_growth).min(1.0);
        let leak = sorted_ids(
            &scenario.library,
            leak_order[..scenario.leak_size(fraction)].to_vec(),
        );
        let staging = stage(scenario, key.clone(), leak, &mut harness)?;

        let k = knowledge(scenario, &staging, level);
        let mut oracles = Oracles::new(scenario, &key, level);
        let learned = adversary.learn(&k, &mut oracles, &mut adv_rng).is_ok();

        let mut outcomes = Vec::with_capacity(trials_per_round as usize);
        for _ in 0..trials_per_round {
            if learned {
                outcomes.push(play_detection(
                    scenario,
                    adversary,
                    level,
                    &key,
                    &staging,
                    &mut harness,
                    &mut adv_rng,
                    false,
                )?);
            } else {
                let (label, _) = challenge(scenario, &key, &mut harness)?;
                outcomes.push(Outcome {
                    disqualified: true,
                    stego: label == Label::Stego,
                    ..Outcome::default()
                });
            }
        }
        let mut result = assemble(
            GameKind::Detection,
            level,
            adversary.name(),
            scenario,
            seed,
            &outcomes,
        );
        result.round = Some(round);
        result.leak_fraction = Some(fraction);
        let broken = result.verdict == GameVerdict::Broken;
        results.push(result);
        if broken {
            break;
        }
    }
    Ok(results)
}

/// Deterministic synthetic covers for experiments without real files.
pub mod synthetic {
    use rand::Rng;

    use crate::rng::{derive_seed, trial_rng};

    /// Byte-value law of generated covers.
    #[derive(Clone, Copy, Debug, PartialEq, Eq)]
    pub enum ByteProfile {
        /// Mean of two uniform bytes: a smooth, centre-heavy histogram.
        Triangular,
        /// Every byte value equally likely.
        Uniform,
    }

    /// `count` covers of `len` random bytes. Different `stream` values give
    /// independent corpora drawn from the same law; for `len >= 16` repeats
    /// are practically impossible.
    pub fn corpus(
        count: usize,
        len: usize,
        profile: ByteProfile,
        seed: u64,
        stream: u64,
    ) -> Vec<Vec<u8>> {
        let mut rng = trial_rng(derive_seed(seed, 0x5359_4e54), stream);
        (0..count)
            .map(|_| {
                (0..len)
                    .map(|_| match profile {
                        ByteProfile::Triangular => {
                            ((rng.gen::<u8>() as u16 + rng.gen::<u8>() as u16) / 2) as u8
                        }
                        ByteProfile::Uniform => rng.gen(),
                    })
                    .collect()
            })
            .collect()
    }
}
