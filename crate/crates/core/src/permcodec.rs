//! Rank/unrank coding between integers, bit strings and partial permutations.
//!
//! An arrangement of `N` out of `T` indices is read as a mixed-radix number
//! whose `i`-th digit is the position of the `i`-th chosen index among the
//! indices still unused, with radix `T - i`. This numbering is exactly the
//! lexicographic order of the index sequences.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::bits::BitString;
use crate::error::{Error, Result};

/// An ordered selection of `N` distinct indices from `[0, T)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Arrangement {
    indices: Vec<usize>,
    universe: usize,
}

impl Arrangement {
    pub fn new(indices: Vec<usize>, universe: usize) -> Result<Self> {
        if indices.is_empty() || indices.len() > universe {
            return Err(Error::InvalidArrangement(format!(
                "length {} not in [1, {universe}]",
                indices.len()
            )));
        }
        let mut seen = vec![false; universe];
        for &i in &indices {
            if i >= universe {
                return Err(Error::InvalidArrangement(format!(
                    "index {i} outside [0, {universe})"
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidArrangement(format!("index {i} repeated")));
            }
        }
        Ok(Arrangement { indices, universe })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// `T`, the size of the ambient index set.
    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Arrangement count `r = T!/(T-N)!` and payload size `l = floor(log2 r)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Capacity {
    #[serde(serialize_with = "ser_decimal")]
    pub r: BigUint,
    pub l: u64,
}

fn ser_decimal<S: serde::Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_str_radix(10))
}

fn check_params(t: usize, n: usize) -> Result<()> {
    if n < 1 || n > t {
        return Err(Error::InvalidParams(format!(
            "need 1 <= N <= T, got T={t}, N={n}"
        )));
    }
    Ok(())
}

/// Falling factorial `T (T-1) ... (T-N+1)`.
pub fn arrangement_count(t: usize, n: usize) -> BigUint {
    (0..n).fold(BigUint::one(), |acc, i| acc * BigUint::from(t - i))
}

pub fn capacity(t: usize, n: usize) -> Result<Capacity> {
    check_params(t, n)?;
    let r = arrangement_count(t, n);
    // r >= 1 so bits() >= 1
    let l = r.bits() - 1;
    Ok(Capacity { r, l })
}

/// The `rank`-th arrangement of `N` out of `T` in lexicographic order.
pub fn unrank(rank: &BigUint, t: usize, n: usize) -> Result<Arrangement> {
    check_params(t, n)?;
    let r = arrangement_count(t, n);
    if *rank >= r {
        return Err(Error::RankOutOfRange {
            rank: rank.to_string(),
            bound: r.to_string(),
        });
    }
    let mut digits = vec![0usize; n];
    let mut rest = rank.clone();
    for i in (0..n).rev() {
        let radix = BigUint::from(t - i);
        let digit = &rest % &radix;
        rest /= radix;
        digits[i] = digit.to_usize().expect("digit below radix");
    }
    debug_assert!(rest.is_zero());

    let mut unused: Vec<usize> = (0..t).collect();
    let indices = digits.into_iter().map(|d| unused.remove(d)).collect();
    Ok(Arrangement {
        indices,
        universe: t,
    })
}

/// Lexicographic rank of `arr` among all arrangements of the same shape.
pub fn rank(arr: &Arrangement) -> BigUint {
    let t = arr.universe;
    let mut used = vec![false; t];
    let mut acc = BigUint::zero();
    for (i, &idx) in arr.indices.iter().enumerate() {
        let smaller_unused = used[..idx].iter().filter(|u| !**u).count();
        used[idx] = true;
        acc = acc * BigUint::from(t - i) + BigUint::from(smaller_unused);
    }
    acc
}

/// Maps an `l`-bit payload, read big-endian, to its arrangement.
pub fn bits_to_arrangement(payload: &BitString, t: usize, n: usize) -> Result<Arrangement> {
    let cap = capacity(t, n)?;
    if payload.len() as u64 != cap.l {
        return Err(Error::WrongPayloadLength {
            expected: cap.l,
            got: payload.len() as u64,
        });
    }
    unrank(&payload.to_biguint(), t, n)
}

/// Inverse of [`bits_to_arrangement`].
pub fn arrangement_to_bits(arr: &Arrangement) -> Result<BitString> {
    let cap = capacity(arr.universe, arr.len())?;
    let r = rank(arr);
    if r.bits() > cap.l {
        return Err(Error::UnreachableArrangement {
            rank: r.to_string(),
            l: cap.l,
        });
    }
    BitString::from_biguint(&r, cap.l as usize)
}
