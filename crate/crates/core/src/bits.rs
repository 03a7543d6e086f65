//! Fixed-length bit strings, most significant bit first.

use std::fmt;

use num_bigint::BigUint;
use num_traits::Zero;

use crate::error::{Error, Result};

/// An ordered string of bits. Index 0 is the most significant bit when the
/// string is read as an unsigned integer.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitString {
    bits: Vec<bool>,
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        BitString {
            bits: vec![false; len],
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        BitString { bits }
    }

    /// Parses a string of `'0'`/`'1'` characters.
    pub fn parse_binary(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Parse(format!("'{other}' is not a binary digit"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(BitString::from_bits)
    }

    /// Takes the first `len` bits of `bytes`, MSB of byte 0 first.
    pub fn from_bytes_msb(bytes: &[u8], len: usize) -> Result<Self> {
        if bytes.len() * 8 < len {
            return Err(Error::LengthMismatch(format!(
                "{} bytes cannot supply {len} bits",
                bytes.len()
            )));
        }
        let bits = (0..len)
            .map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0)
            .collect();
        Ok(BitString { bits })
    }

    /// Big-endian encoding of `value` in exactly `len` bits.
    pub fn from_biguint(value: &BigUint, len: usize) -> Result<Self> {
        if value.bits() > len as u64 {
            return Err(Error::LengthMismatch(format!(
                "value needs {} bits, only {len} available",
                value.bits()
            )));
        }
        let bits = (0..len).map(|i| value.bit((len - 1 - i) as u64)).collect();
        Ok(BitString { bits })
    }

    pub fn to_biguint(&self) -> BigUint {
        let mut v = BigUint::zero();
        let len = self.bits.len();
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                v.set_bit((len - 1 - i) as u64, true);
            }
        }
        v
    }

    /// Parses hex as an unsigned integer and encodes it in `len` bits.
    pub fn from_hex(hex: &str, len: usize) -> Result<Self> {
        let hex = hex.trim();
        if hex.is_empty() {
            return Err(Error::Parse("empty hex string".into()));
        }
        let value = BigUint::parse_bytes(hex.as_bytes(), 16)
            .ok_or_else(|| Error::Parse(format!("'{hex}' is not hexadecimal")))?;
        Self::from_biguint(&value, len)
    }

    /// Lowercase hex of the integer value, zero-padded to `ceil(len/4)` digits.
    pub fn to_hex(&self) -> String {
        let width = self.bits.len().div_ceil(4);
        if width == 0 {
            return String::new();
        }
        format!("{:0>width$}", self.to_biguint().to_str_radix(16))
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn xor(&self, other: &BitString) -> Result<BitString> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch(format!(
                "cannot XOR {} bits with {} bits",
                self.len(),
                other.len()
            )));
        }
        Ok(BitString {
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| a ^ b)
                .collect(),
        })
    }

    /// Number of positions where the two strings agree.
    pub fn agreement(&self, other: &BitString) -> Result<usize> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch(format!(
                "cannot compare {} bits with {} bits",
                self.len(),
                other.len()
            )));
        }
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a == b)
            .count())
    }

    pub fn flip(&mut self, index: usize) {
        self.bits[index] = !self.bits[index];
    }

    /// Splits into blocks of `block` bits, zero-padding the final block.
    pub fn segment(&self, block: usize) -> Vec<BitString> {
        assert!(block > 0, "block length must be positive");
        self.bits
            .chunks(block)
            .map(|chunk| {
                let mut bits = chunk.to_vec();
                bits.resize(block, false);
                BitString { bits }
            })
            .collect()
    }

    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a BitString>) -> BitString {
        BitString {
            bits: parts
                .into_iter()
                .flat_map(|p| p.bits.iter().copied())
                .collect(),
        }
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}
