//! Coverless embedding: a message is XORed with the key and the result picks
//! which arrangement of library covers is sent. No cover is ever modified.

use std::fs;
use std::path::Path;
use std::sync::Mutex;

use rand::rngs::OsRng;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::library::{CoverId, CoverLibrary};
use crate::permcodec::{self, Arrangement};

pub const SEQUENCE_VERSION: u32 = 1;

/// Source of key material. Implementations must tolerate concurrent draws.
pub trait EntropySource: Send + Sync {
    fn fill(&self, buf: &mut [u8]) -> Result<()>;
}

/// Operating-system CSPRNG.
#[derive(Debug, Default, Clone, Copy)]
pub struct OsEntropy;

impl EntropySource for OsEntropy {
    fn fill(&self, buf: &mut [u8]) -> Result<()> {
        OsRng
            .try_fill_bytes(buf)
            .map_err(|e| Error::EntropyUnavailable(e.to_string()))
    }
}

/// ChaCha20 stream from a fixed seed, for reproducible runs.
#[derive(Debug)]
pub struct SeededEntropy(Mutex<ChaCha20Rng>);

impl SeededEntropy {
    pub fn new(seed: u64) -> Self {
        SeededEntropy(Mutex::new(ChaCha20Rng::seed_from_u64(seed)))
    }
}

impl EntropySource for SeededEntropy {
    fn fill(&self, buf: &mut [u8]) -> Result<()> {
        self.0
            .lock()
            .map_err(|_| Error::EntropyUnavailable("seeded source poisoned".into()))?
            .fill_bytes(buf);
        Ok(())
    }
}

/// Replays a fixed byte string once, then reports exhaustion.
#[derive(Debug)]
pub struct FixedEntropy {
    bytes: Vec<u8>,
    cursor: Mutex<usize>,
}

impl FixedEntropy {
    pub fn new(bytes: Vec<u8>) -> Self {
        FixedEntropy {
            bytes,
            cursor: Mutex::new(0),
        }
    }
}

impl EntropySource for FixedEntropy {
    fn fill(&self, buf: &mut [u8]) -> Result<()> {
        let mut cursor = self
            .cursor
            .lock()
            .map_err(|_| Error::EntropyUnavailable("fixed source poisoned".into()))?;
        let end = *cursor + buf.len();
        if end > self.bytes.len() {
            return Err(Error::EntropyUnavailable("fixed source exhausted".into()));
        }
        buf.copy_from_slice(&self.bytes[*cursor..end]);
        *cursor = end;
        Ok(())
    }
}

/// Wraps any RNG so it can serve as an entropy source.
pub struct RngEntropy<R>(Mutex<R>);

impl<R: RngCore + Send> RngEntropy<R> {
    pub fn new(rng: R) -> Self {
        RngEntropy(Mutex::new(rng))
    }
}

impl<R: RngCore + Send> EntropySource for RngEntropy<R> {
    fn fill(&self, buf: &mut [u8]) -> Result<()> {
        self.0
            .lock()
            .map_err(|_| Error::EntropyUnavailable("rng poisoned".into()))?
            .try_fill_bytes(buf)
            .map_err(|e| Error::EntropyUnavailable(e.to_string()))
    }
}

/// The shared `l`-bit key; the key space has `2^l` elements.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct StegoKey {
    bits: BitString,
}

impl std::fmt::Debug for StegoKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "StegoKey(l={})", self.bits.len())
    }
}

impl StegoKey {
    pub fn from_bits(bits: BitString) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::InvalidParams("key length must be at least 1".into()));
        }
        Ok(StegoKey { bits })
    }

    pub fn bits(&self) -> &BitString {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Two-line text form: `l=<int>` then the key as zero-padded hex.
    pub fn to_key_file(&self) -> String {
        format!("l={}\n{}\n", self.bits.len(), self.bits.to_hex())
    }

    pub fn from_key_file(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty key file".into()))?;
        let l: usize = header
            .trim()
            .strip_prefix("l=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad key header '{header}'")))?;
        let hex = lines
            .next()
            .ok_or_else(|| Error::Parse("key file lacks the key line".into()))?
            .trim();
        if hex.len() != l.div_ceil(4) {
            return Err(Error::Parse(format!(
                "key line must have {} hex digits, found {}",
                l.div_ceil(4),
                hex.len()
            )));
        }
        if lines.any(|rest| !rest.trim().is_empty()) {
            return Err(Error::Parse("trailing content in key file".into()));
        }
        Self::from_bits(BitString::from_hex(hex, l)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_key_file(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_key_file()).map_err(|e| Error::io(path, e))
    }
}

/// One `l`-bit message block.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Message {
    bits: BitString,
}

impl Message {
    pub fn new(bits: BitString) -> Self {
        Message { bits }
    }

    pub fn bits(&self) -> &BitString {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// The transmitted stego-cover: `N` distinct library covers in order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StegoSequence {
    ids: Vec<CoverId>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SequenceFile {
    version: u32,
    #[serde(rename = "N")]
    n: usize,
    ids: Vec<CoverId>,
}

impl StegoSequence {
    pub fn new(ids: Vec<CoverId>) -> Self {
        StegoSequence { ids }
    }

    pub fn ids(&self) -> &[CoverId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&SequenceFile {
            version: SEQUENCE_VERSION,
            n: self.ids.len(),
            ids: self.ids.clone(),
        })
        .expect("sequence serializes")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: SequenceFile =
            serde_json::from_str(json).map_err(|e| Error::Parse(e.to_string()))?;
        if file.version != SEQUENCE_VERSION {
            return Err(Error::Parse(format!(
                "unsupported sequence version {}",
                file.version
            )));
        }
        if file.n != file.ids.len() {
            return Err(Error::Parse(format!(
                "N = {} but {} ids listed",
                file.n,
                file.ids.len()
            )));
        }
        Ok(StegoSequence { ids: file.ids })
    }
}

/// Draws `l` uniform key bits from `entropy`.
pub fn keygen(l: usize, entropy: &dyn EntropySource) -> Result<StegoKey> {
    if l == 0 {
        return Err(Error::InvalidParams("key length must be at least 1".into()));
    }
    let mut buf = vec![0u8; l.div_ceil(8)];
    entropy.fill(&mut buf)?;
    StegoKey::from_bits(BitString::from_bytes_msb(&buf, l)?)
}

/// Draws a key sized for sequences of `n` covers out of a library of `t`.
pub fn keygen_for(t: usize, n: usize, entropy: &dyn EntropySource) -> Result<StegoKey> {
    let cap = permcodec::capacity(t, n)?;
    keygen(cap.l as usize, entropy)
}

/// Hides one message block as an arrangement of `n` covers from `lib`.
pub fn embed(m: &Message, k: &StegoKey, lib: &CoverLibrary, n: usize) -> Result<StegoSequence> {
    let cap = permcodec::capacity(lib.len(), n)?;
    if m.len() != k.len() {
        return Err(Error::LengthMismatch(format!(
            "message has {} bits, key has {}",
            m.len(),
            k.len()
        )));
    }
    if k.len() as u64 != cap.l {
        return Err(Error::LengthMismatch(format!(
            "key has {} bits but T={}, N={n} carries {}",
            k.len(),
            lib.len(),
            cap.l
        )));
    }
    let payload = m.bits.xor(&k.bits)?;
    let arr = permcodec::bits_to_arrangement(&payload, lib.len(), n)?;
    Ok(StegoSequence {
        ids: arr.indices().iter().map(|&i| lib.id_at(i)).collect(),
    })
}

/// Resolves every cover of `seq` to its library index.
pub fn sequence_arrangement(seq: &StegoSequence, lib: &CoverLibrary) -> Result<Arrangement> {
    let indices = seq
        .ids
        .iter()
        .map(|id| lib.lookup(id))
        .collect::<Result<Vec<_>>>()?;
    Arrangement::new(indices, lib.len())
}

/// Recovers the message block carried by `seq`.
///
/// A cover that is not in the library yields [`Error::NotInLibrary`], which is
/// itself evidence that the sequence did not come from this library.
pub fn extract(seq: &StegoSequence, k: &StegoKey, lib: &CoverLibrary) -> Result<Message> {
    let indices = seq
        .ids
        .iter()
        .map(|id| lib.lookup(id))
        .collect::<Result<Vec<_>>>()?;
    let cap = permcodec::capacity(lib.len(), indices.len())?;
    if k.len() as u64 != cap.l {
        return Err(Error::LengthMismatch(format!(
            "key has {} bits but a {}-cover sequence from T={} carries {}",
            k.len(),
            indices.len(),
            lib.len(),
            cap.l
        )));
    }
    let arr = Arrangement::new(indices, lib.len())?;
    let payload = permcodec::arrangement_to_bits(&arr)?;
    Ok(Message {
        bits: payload.xor(&k.bits)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;

    fn lib(t: usize) -> CoverLibrary {
        let blobs: Vec<Vec<u8>> = (0..t).map(|i| format!("cover-{i}").into_bytes()).collect();
        CoverLibrary::from_blobs(blobs.iter().map(|b| ("mem", b.as_slice()))).unwrap()
    }

    fn bits(s: &str) -> BitString {
        BitString::parse_binary(s).unwrap()
    }

    #[test]
    fn keygen_passes_entropy_through() {
        let src = FixedEntropy::new(vec![0b1010_0000]);
        assert_eq!(keygen(4, &src).unwrap().bits().to_string(), "1010");
        assert!(matches!(keygen(4, &src), Err(Error::EntropyUnavailable(_))));
        assert!(matches!(
            keygen(0, &OsEntropy),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn independent_keys_differ() {
        let a = keygen(64, &OsEntropy).unwrap();
        let b = keygen(64, &OsEntropy).unwrap();
        assert_ne!(a, b);
        let s = SeededEntropy::new(7);
        assert_ne!(keygen(64, &s).unwrap(), keygen(64, &s).unwrap());
    }

    #[test]
    fn key_file_format() {
        let k = StegoKey::from_bits(bits("10101")).unwrap();
        assert_eq!(k.to_key_file(), "l=5\n15\n");
        assert_eq!(StegoKey::from_key_file("l=5\n15\n").unwrap(), k);
        assert!(StegoKey::from_key_file("l=5\n015\n").is_err());
        assert!(StegoKey::from_key_file("l=5\n3f\n").is_err());
        assert!(StegoKey::from_key_file("l=x\n1\n").is_err());
    }

    #[test]
    fn zero_message_zero_key_gives_first_covers() {
        let lib = lib(4);
        let seq = embed(
            &Message::new(bits("0000")),
            &StegoKey::from_bits(bits("0000")).unwrap(),
            &lib,
            3,
        )
        .unwrap();
        assert_eq!(seq.ids(), &[lib.id_at(0), lib.id_at(1), lib.id_at(2)]);

        let same = embed(
            &Message::new(bits("0110")),
            &StegoKey::from_bits(bits("0110")).unwrap(),
            &lib,
            3,
        )
        .unwrap();
        assert_eq!(same, seq);
    }

    #[test]
    fn xor_payload_selects_rank_six() {
        let lib = lib(4);
        let seq = embed(
            &Message::new(bits("0011")),
            &StegoKey::from_bits(bits("0101")).unwrap(),
            &lib,
            3,
        )
        .unwrap();
        // lexicographic 3-arrangements of 4: rank 6 is (1,0,2)
        let expected = permcodec::unrank(&BigUint::from(6u32), 4, 3).unwrap();
        assert_eq!(expected.indices(), &[1, 0, 2]);
        assert_eq!(seq.ids(), &[lib.id_at(1), lib.id_at(0), lib.id_at(2)]);
    }

    #[test]
    fn length_checks() {
        let lib = lib(4);
        let k = StegoKey::from_bits(bits("0000")).unwrap();
        assert!(matches!(
            embed(&Message::new(bits("000")), &k, &lib, 3),
            Err(Error::LengthMismatch(_))
        ));
        assert!(matches!(
            embed(&Message::new(bits("0000")), &k, &lib, 5),
            Err(Error::InvalidParams(_))
        ));
        let k5 = StegoKey::from_bits(bits("00000")).unwrap();
        assert!(matches!(
            embed(&Message::new(bits("00000")), &k5, &lib, 3),
            Err(Error::LengthMismatch(_))
        ));
    }

    #[test]
    fn extract_errors() {
        let lib = lib(4);
        let k = StegoKey::from_bits(bits("0000")).unwrap();
        let foreign = CoverId::of_bytes(b"not in library");
        let seq = StegoSequence::new(vec![lib.id_at(0), foreign, lib.id_at(1)]);
        assert!(matches!(extract(&seq, &k, &lib), Err(Error::NotInLibrary(id)) if id == foreign));

        let dup = StegoSequence::new(vec![lib.id_at(0), lib.id_at(0), lib.id_at(1)]);
        assert!(matches!(
            extract(&dup, &k, &lib),
            Err(Error::InvalidArrangement(_))
        ));

        // (3,1,2) has rank 20 >= 2^4
        let arr = permcodec::unrank(&BigUint::from(20u32), 4, 3).unwrap();
        let seq = StegoSequence::new(arr.indices().iter().map(|&i| lib.id_at(i)).collect());
        assert!(matches!(
            extract(&seq, &k, &lib),
            Err(Error::UnreachableArrangement { .. })
        ));
    }

    #[test]
    fn round_trip_exhaustive_t6_n3() {
        let lib = lib(6);
        let l = permcodec::capacity(6, 3).unwrap().l as usize;
        for kv in 0u32..(1 << l) {
            let k = StegoKey::from_bits(BitString::from_biguint(&kv.into(), l).unwrap()).unwrap();
            for mv in 0u32..(1 << l) {
                let m = Message::new(BitString::from_biguint(&mv.into(), l).unwrap());
                let seq = embed(&m, &k, &lib, 3).unwrap();
                assert_eq!(extract(&seq, &k, &lib).unwrap(), m);
            }
        }
    }

    #[test]
    fn sequence_file_round_trip() {
        let lib = lib(5);
        let seq = StegoSequence::new(vec![lib.id_at(3), lib.id_at(1)]);
        let json = seq.to_json();
        assert!(json.starts_with("{\"version\":1,\"N\":2,\"ids\":[\""));
        assert_eq!(StegoSequence::from_json(&json).unwrap(), seq);
        let bad = json.replace("\"N\":2", "\"N\":3");
        assert!(StegoSequence::from_json(&bad).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn key_xor_symmetry(m in any::<u16>(), k in any::<u16>(), d in any::<u16>()) {
                let lib = lib(8);
                let l = permcodec::capacity(8, 4).unwrap().l as usize;
                let mask = (1u32 << l) - 1;
                let to_bits = |v: u32| BitString::from_biguint(&(v & mask).into(), l).unwrap();
                let (m, k, d) = (m as u32, k as u32, d as u32);
                let a = embed(&Message::new(to_bits(m)), &StegoKey::from_bits(to_bits(k)).unwrap(), &lib, 4).unwrap();
                let b = embed(&Message::new(to_bits(m ^ d)), &StegoKey::from_bits(to_bits(k ^ d)).unwrap(), &lib, 4).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
