//! Histogram estimates of observable distributions and the distance suite
//! used to decide whether two sources are distinguishable at level epsilon.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::trial_rng;

/// Equal-width bins over `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Bins {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Bins {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidParams("need at least one bin".into()));
        }
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidParams(format!("bad bin range [{lo}, {hi}]")));
        }
        Ok(Bins { lo, hi, count })
    }

    /// 256 unit-width bins, one per byte value.
    pub fn bytes() -> Self {
        Bins {
            lo: 0.0,
            hi: 256.0,
            count: 256,
        }
    }

    fn width(&self) -> f64 {
        (self.hi - self.lo) / self.count as f64
    }

    pub fn index_of(&self, v: f64) -> usize {
        if self.hi == self.lo {
            return 0;
        }
        let pos = ((v - self.lo) / (self.hi - self.lo) * self.count as f64).floor();
        (pos.max(0.0) as usize).min(self.count - 1)
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalDistribution {
    bins: Bins,
    masses: Vec<f64>,
    samples: u64,
}

impl EmpiricalDistribution {
    pub fn from_counts(bins: Bins, counts: &[u64]) -> Result<Self> {
        if counts.len() != bins.count {
            return Err(Error::BinMismatch);
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptySamples);
        }
        Ok(EmpiricalDistribution {
            bins,
            masses: counts.iter().map(|&c| c as f64 / total as f64).collect(),
            samples: total,
        })
    }

    pub fn bins(&self) -> &Bins {
        &self.bins
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    /// Masses after adding `1/(2n)` to every bin and renormalising.
    fn smoothed(&self) -> Vec<f64> {
        let pseudo = 1.0 / (2.0 * self.samples as f64);
        let norm = 1.0 + pseudo * self.masses.len() as f64;
        self.masses.iter().map(|m| (m + pseudo) / norm).collect()
    }
}

/// Equal-width histogram of `samples` over the caller's reference range.
/// Values outside the range fall into the nearest edge bin.
pub fn estimate_distribution(samples: &[f64], bins: Bins) -> Result<EmpiricalDistribution> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParams(format!("non-finite sample {bad}")));
    }
    let mut counts = vec![0u64; bins.count];
    for &v in samples {
        counts[bins.index_of(v)] += 1;
    }
    EmpiricalDistribution::from_counts(bins, &counts)
}

/// Byte-value histogram of opaque content.
pub fn byte_histogram<'a>(
    blobs: impl IntoIterator<Item = &'a [u8]>,
) -> Result<EmpiricalDistribution> {
    let mut counts = vec![0u64; 256];
    for blob in blobs {
        for &b in blob {
            counts[b as usize] += 1;
        }
    }
    EmpiricalDistribution::from_counts(Bins::bytes(), &counts)
}

/// `[min, max]` over both sample sets.
pub fn pooled_range(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySamples);
    }
    let (lo, hi) = a
        .iter()
        .chain(b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    Ok((lo, hi))
}

fn same_support(p: &EmpiricalDistribution, q: &EmpiricalDistribution) -> Result<()> {
    if p.bins != q.bins {
        return Err(Error::BinMismatch);
    }
    Ok(())
}

/// Kullback-Leibler divergence `D(P || Q)` in nats, on smoothed masses.
pub fn kl(p: &EmpiricalDistribution, q: &EmpiricalDistribution) -> Result<f64> {
    same_support(p, q)?;
    let (ps, qs) = (p.smoothed(), q.smoothed());
    let d: f64 = ps.iter().zip(&qs).map(|(a, b)| a * (a / b).ln()).sum();
    Ok(d.max(0.0))
}

/// Jensen-Shannon divergence in nats, bounded by `ln 2`.
pub fn js(p: &EmpiricalDistribution, q: &EmpiricalDistribution) -> Result<f64> {
    same_support(p, q)?;
    let term = |a: f64, m: f64| if a > 0.0 { a * (a / m).ln() } else { 0.0 };
    let d: f64 = p
        .masses
        .iter()
        .zip(&q.masses)
        .map(|(&a, &b)| {
            let m = (a + b) / 2.0;
            0.5 * term(a, m) + 0.5 * term(b, m)
        })
        .sum();
    Ok(d.clamp(0.0, std::f64::consts::LN_2))
}

/// Total variation distance.
pub fn tv(p: &EmpiricalDistribution, q: &EmpiricalDistribution) -> Result<f64> {
    same_support(p, q)?;
    let d: f64 = p
        .masses
        .iter()
        .zip(&q.masses)
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok((0.5 * d).clamp(0.0, 1.0))
}

/// Wasserstein-1 distance with mass placed at bin centres.
pub fn w1(p: &EmpiricalDistribution, q: &EmpiricalDistribution) -> Result<f64> {
    same_support(p, q)?;
    let k = p.masses.len();
    let (mut fp, mut fq, mut d) = (0.0, 0.0, 0.0);
    for i in 0..k.saturating_sub(1) {
        fp += p.masses[i];
        fq += q.masses[i];
        d += (fp - fq).abs() * (p.bins.center(i + 1) - p.bins.center(i));
    }
    Ok(d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Kl,
    Js,
    Tv,
    W1,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Kl, Metric::Js, Metric::Tv, Metric::W1];

    pub fn evaluate(self, p: &EmpiricalDistribution, q: &EmpiricalDistribution) -> Result<f64> {
        match self {
            Metric::Kl => kl(p, q),
            Metric::Js => js(p, q),
            Metric::Tv => tv(p, q),
            Metric::W1 => w1(p, q),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Kl => "kl",
            Metric::Js => "js",
            Metric::Tv => "tv",
            Metric::W1 => "w1",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kl" => Ok(Metric::Kl),
            "js" => Ok(Metric::Js),
            "tv" => Ok(Metric::Tv),
            "w1" | "w" => Ok(Metric::W1),
            other => Err(Error::Parse(format!("unknown metric '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    IndistinguishableAtEpsilon,
    Distinguishable,
}

#[derive(Clone, Debug, Serialize)]
pub struct DistanceReport {
    pub metric: Metric,
    pub value: f64,
    pub epsilon: f64,
    pub verdict: Verdict,
    pub bins: usize,
    pub samples_a: usize,
    pub samples_b: usize,
    /// Wall-clock seconds spent; not part of the verdict.
    #[serde(skip)]
    pub elapsed_secs: f64,
}

/// Permutation-null settings for choosing epsilon from the data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NullConfig {
    pub resamples: usize,
    pub percentile: f64,
    pub seed: u64,
}

impl Default for NullConfig {
    fn default() -> Self {
        NullConfig {
            resamples: 999,
            percentile: 0.99,
            seed: 0,
        }
    }
}

fn metric_on_samples(a: &[f64], b: &[f64], bins: Bins, metric: Metric) -> Result<f64> {
    metric.evaluate(
        &estimate_distribution(a, bins)?,
        &estimate_distribution(b, bins)?,
    )
}

/// Histograms both sample sets over their pooled range and compares `metric`
/// against `epsilon`.
pub fn distinguishability_test(
    a: &[f64],
    b: &[f64],
    epsilon: f64,
    metric: Metric,
    bins: usize,
) -> Result<DistanceReport> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "epsilon must be finite and non-negative, got {epsilon}"
        )));
    }
    let start = Instant::now();
    let (lo, hi) = pooled_range(a, b)?;
    let value = metric_on_samples(a, b, Bins::new(lo, hi, bins)?, metric)?;
    Ok(DistanceReport {
        metric,
        value,
        epsilon,
        verdict: if value > epsilon {
            Verdict::Distinguishable
        } else {
            Verdict::IndistinguishableAtEpsilon
        },
        bins,
        samples_a: a.len(),
        samples_b: b.len(),
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// Epsilon at the given percentile of `metric` over random re-splits of the
/// pooled samples.
pub fn calibrate_epsilon(
    a: &[f64],
    b: &[f64],
    metric: Metric,
    bins: usize,
    null: NullConfig,
) -> Result<f64> {
    if null.resamples == 0 || !(null.percentile > 0.0 && null.percentile <= 1.0) {
        return Err(Error::InvalidParams(
            "null needs resamples >= 1 and percentile in (0, 1]".into(),
        ));
    }
    let (lo, hi) = pooled_range(a, b)?;
    let grid = Bins::new(lo, hi, bins)?;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut values = (0..null.resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = trial_rng(null.seed, r as u64);
            let mut shuffled = pooled.clone();
            shuffled.shuffle(&mut rng);
            let (x, y) = shuffled.split_at(a.len());
            metric_on_samples(x, y, grid, metric)
        })
        .collect::<Result<Vec<_>>>()?;
    values.sort_by(f64::total_cmp);
    let rank = (null.percentile * null.resamples as f64).ceil() as usize;
    Ok(values[rank.clamp(1, values.len()) - 1])
}

/// [`distinguishability_test`] with epsilon drawn from the permutation null.
pub fn distinguishability_test_auto(
    a: &[f64],
    b: &[f64],
    metric: Metric,
    bins: usize,
    null: NullConfig,
) -> Result<DistanceReport> {
    let start = Instant::now();
    let epsilon = calibrate_epsilon(a, b, metric, bins, null)?;
    let mut report = distinguishability_test(a, b, epsilon, metric, bins)?;
    report.elapsed_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Runs every metric; the pair is distinguishable if any one exceeds epsilon.
pub fn distinguishability_suite(
    a: &[f64],
    b: &[f64],
    epsilon: f64,
    bins: usize,
) -> Result<(Verdict, Vec<DistanceReport>)> {
    let reports = Metric::ALL
        .iter()
        .map(|&m| distinguishability_test(a, b, epsilon, m, bins))
        .collect::<Result<Vec<_>>>()?;
    let verdict = if reports
        .iter()
        .any(|r| r.verdict == Verdict::Distinguishable)
    {
        Verdict::Distinguishable
    } else {
        Verdict::IndistinguishableAtEpsilon
    };
    Ok((verdict, reports))
}

/// Parses newline-delimited decimal samples; blank lines are skipped.
pub fn parse_samples(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse(format!("'{l}' is not a finite decimal number")))
        })
        .collect()
}
