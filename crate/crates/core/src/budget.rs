//! How many stego-sequences can be sent before the whole library is likely
//! to have been shown on the channel.
//!
//! Each sequence exposes a uniformly random `N`-subset of the `T` library
//! covers (order within a sequence is irrelevant to exposure). The exact
//! probability that `x` independent sequences jointly expose all `T` covers is
//! the inclusion-exclusion sum
//!
//! ```text
//! P(x, N, T) = sum_{y=0}^{T-N} (-1)^y C(T,y) (C(T-y,N) / C(T,N))^x
//! ```
//!
//! The published estimate drops the alternating signs; it is kept here as
//! [`pr_coverage_published`] so the two can be compared. All arithmetic is exact
//! and only converted to `f64` at the boundary.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::seq::index;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::trial_rng;

pub fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    (0..k).fold(BigUint::one(), |acc, i| {
        acc * BigUint::from(n - i) / BigUint::from(i + 1)
    })
}

fn check(n: usize, t: usize) -> Result<()> {
    if n < 1 || n > t {
        return Err(Error::InvalidParams(format!(
            "need 1 <= N <= T, got T={t}, N={n}"
        )));
    }
    Ok(())
}

fn rational(num: BigUint, den: BigUint) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Lossless-as-possible conversion of an exact ratio to `f64`.
pub fn ratio_to_f64(r: &BigRational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    let num = r.numer().abs();
    let den = r.denom().clone();
    // scale so the integer quotient carries ~64 significant bits
    let shift = 64i64 - (num.bits() as i64 - den.bits() as i64);
    let q = if shift >= 0 {
        (num << shift as u64) / den
    } else {
        num / (den << (-shift) as u64)
    };
    let v = q.to_f64().unwrap_or(f64::INFINITY) * 2f64.powi(-shift as i32);
    if r.is_negative() {
        -v
    } else {
        v
    }
}

/// Single term `C(T,y) (C(T-y,N)/C(T,N))^x` of the published formula.
///
/// Returns 0 for `y > T - N`.
pub fn pr_remaining_published(y: usize, x: u64, n: usize, t: usize) -> Result<BigRational> {
    check(n, t)?;
    if y > t - n {
        return Ok(BigRational::zero());
    }
    let x = exponent(x)?;
    let ratio = rational(binomial(t - y, n), binomial(t, n));
    Ok(BigRational::from_integer(BigInt::from(binomial(t, y))) * num_traits::pow(ratio, x))
}

/// The published estimate `1 - sum_{y=1}^{T-N} C(T,y) (C(T-y,N)/C(T,N))^x`.
///
/// Not a probability in general; it can leave `[0, 1]`.
pub fn pr_coverage_published(x: u64, n: usize, t: usize) -> Result<BigRational> {
    check(n, t)?;
    let mut acc = BigRational::one();
    for y in 1..=(t - n) {
        acc -= pr_remaining_published(y, x, n, t)?;
    }
    Ok(acc)
}

fn exponent(x: u64) -> Result<usize> {
    usize::try_from(x).map_err(|_| Error::InvalidParams(format!("x = {x} is too large")))
}

/// Exact probability that `x` uniform `N`-subsets of `[0, T)` cover everything.
pub fn pr_coverage_exact(x: u64, n: usize, t: usize) -> Result<BigRational> {
    check(n, t)?;
    if x == 0 {
        return Ok(BigRational::zero());
    }
    let x = exponent(x)?;
    let total = binomial(t, n);
    let mut num = BigInt::zero();
    for y in 0..=(t - n) {
        let term = BigInt::from(binomial(t, y) * num_traits::pow(binomial(t - y, n), x));
        if y % 2 == 0 {
            num += term;
        } else {
            num -= term;
        }
    }
    Ok(BigRational::new(
        num,
        BigInt::from(num_traits::pow(total, x)),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub successes: u64,
    pub trials: u64,
    pub seed: u64,
}

/// Monte-Carlo estimate of the coverage probability.
///
/// Trial `i` draws from its own stream of `seed`, so the estimate is identical
/// for any thread count.
pub fn pr_coverage_mc(x: u64, n: usize, t: usize, trials: u64, seed: u64) -> Result<McEstimate> {
    check(n, t)?;
    if trials == 0 {
        return Err(Error::InvalidParams("trials must be at least 1".into()));
    }
    let successes: u64 = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            let mut seen = vec![false; t];
            let mut remaining = t;
            for _ in 0..x {
                for i in index::sample(&mut rng, t, n) {
                    if !std::mem::replace(&mut seen[i], true) {
                        remaining -= 1;
                    }
                }
            }
            u64::from(remaining == 0)
        })
        .sum();
    let p = successes as f64 / trials as f64;
    Ok(McEstimate {
        estimate: p,
        std_error: (p * (1.0 - p) / trials as f64).sqrt(),
        successes,
        trials,
        seed,
    })
}

/// Largest `x` with exact coverage probability strictly below `zeta`.
pub fn max_safe_uses(n: usize, t: usize, zeta: f64) -> Result<u64> {
    check(n, t)?;
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(Error::InvalidParams(format!(
            "zeta must lie in (0, 1), got {zeta}"
        )));
    }
    if n == t {
        return Ok(0);
    }
    let threshold = BigRational::from_float(zeta).expect("finite zeta");
    let unsafe_at = |x: u64| -> Result<bool> { Ok(pr_coverage_exact(x, n, t)? >= threshold) };

    // p(0) = 0 < zeta; find the first x where p(x) >= zeta
    let mut lo = 0u64;
    let mut hi = 1u64;
    while !unsafe_at(hi)? {
        lo = hi;
        hi = hi
            .checked_mul(2)
            .ok_or_else(|| Error::InvalidParams("budget search overflowed".into()))?;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if unsafe_at(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lo)
}

#[derive(Clone, Debug, Serialize)]
pub struct CoverageReport {
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub x: u64,
    pub zeta: f64,
    pub max_safe_uses: u64,
    pub p_exact: f64,
    pub p_published: f64,
    pub p_published_out_of_range: bool,
    pub published_matches_exact: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc: Option<McEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_within_4se: Option<bool>,
}

/// Evaluates all three routes at `x` (defaulting to the safe budget).
pub fn coverage_report(
    n: usize,
    t: usize,
    zeta: f64,
    x: Option<u64>,
    mc: Option<(u64, u64)>,
) -> Result<CoverageReport> {
    let max_safe = max_safe_uses(n, t, zeta)?;
    let x = x.unwrap_or(max_safe);
    let exact = pr_coverage_exact(x, n, t)?;
    let published = pr_coverage_published(x, n, t)?;
    let p_exact = ratio_to_f64(&exact);
    let p_published = ratio_to_f64(&published);
    let mc = mc
        .map(|(trials, seed)| pr_coverage_mc(x, n, t, trials, seed))
        .transpose()?;
    let mc_within_4se = mc.as_ref().map(|m| {
        let diff = (m.estimate - p_exact).abs();
        diff <= 4.0 * m.std_error || (m.std_error == 0.0 && diff < 1e-12)
    });
    Ok(CoverageReport {
        t,
        n,
        x,
        zeta,
        max_safe_uses: max_safe,
        p_exact,
        p_published,
        p_published_out_of_range: published.is_negative() || published > BigRational::one(),
        published_matches_exact: published == exact,
        mc,
        mc_within_4se,
    })
}
