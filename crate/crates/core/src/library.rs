//! The shared secret cover library.
//!
//! Covers are opaque byte blobs identified by their SHA-256 digest. Both
//! parties index the library by ascending digest, so the index of a cover
//! depends only on the multiset of cover contents and never on file names or
//! the order in which files were listed.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

/// SHA-256 digest of a cover's bytes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CoverId([u8; 32]);

impl CoverId {
    pub fn of_bytes(bytes: &[u8]) -> Self {
        CoverId(Sha256::digest(bytes).into())
    }

    pub fn from_digest(digest: [u8; 32]) -> Self {
        CoverId(digest)
    }

    pub fn digest(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Display for CoverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for CoverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CoverId({})", &hex::encode(self.0)[..12])
    }
}

impl FromStr for CoverId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() != 64 || s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(Error::Parse(format!(
                "cover id must be 64 lowercase hex digits, got '{s}'"
            )));
        }
        let mut digest = [0u8; 32];
        hex::decode_to_slice(s, &mut digest)
            .map_err(|e| Error::Parse(format!("cover id '{s}': {e}")))?;
        Ok(CoverId(digest))
    }
}

impl Serialize for CoverId {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for CoverId {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverEntry {
    pub id: CoverId,
    pub path: String,
    pub bytes: u64,
}

/// The secret library X: `T >= 2` distinct covers in ascending digest order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoverLibrary {
    covers: Vec<CoverEntry>,
    index: HashMap<CoverId, usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    version: u32,
    #[serde(rename = "T")]
    t: usize,
    covers: Vec<CoverEntry>,
}

impl CoverLibrary {
    /// Builds a library from arbitrary entries, sorting them canonically.
    pub fn from_entries(mut covers: Vec<CoverEntry>) -> Result<Self> {
        if covers.len() < 2 {
            return Err(Error::LibraryTooSmall(covers.len()));
        }
        covers.sort_by_key(|c| c.id);
        if let Some(w) = covers.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::DuplicateCover(w[0].id));
        }
        let index = covers.iter().enumerate().map(|(i, c)| (c.id, i)).collect();
        Ok(CoverLibrary { covers, index })
    }

    /// Builds a library from in-memory blobs labelled by a display path.
    pub fn from_blobs<'a>(blobs: impl IntoIterator<Item = (&'a str, &'a [u8])>) -> Result<Self> {
        Self::from_entries(
            blobs
                .into_iter()
                .map(|(path, bytes)| CoverEntry {
                    id: CoverId::of_bytes(bytes),
                    path: path.to_owned(),
                    bytes: bytes.len() as u64,
                })
                .collect(),
        )
    }

    /// Number of covers, `T`.
    pub fn len(&self) -> usize {
        self.covers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covers.is_empty()
    }

    pub fn covers(&self) -> &[CoverEntry] {
        &self.covers
    }

    pub fn ids(&self) -> impl ExactSizeIterator<Item = CoverId> + '_ {
        self.covers.iter().map(|c| c.id)
    }

    pub fn get(&self, index: usize) -> Option<&CoverEntry> {
        self.covers.get(index)
    }

    pub fn id_at(&self, index: usize) -> CoverId {
        self.covers[index].id
    }

    pub fn contains(&self, id: &CoverId) -> bool {
        self.index.contains_key(id)
    }

    /// Library index of `id`.
    pub fn lookup(&self, id: &CoverId) -> Result<usize> {
        self.index.get(id).copied().ok_or(Error::NotInLibrary(*id))
    }

    pub fn to_manifest_json(&self) -> String {
        let manifest = ManifestFile {
            version: MANIFEST_VERSION,
            t: self.covers.len(),
            covers: self.covers.clone(),
        };
        serde_json::to_string_pretty(&manifest).expect("manifest serializes")
    }

    /// Parses a manifest and checks that it is already in canonical form.
    pub fn from_manifest_json(json: &str) -> Result<Self> {
        let manifest: ManifestFile =
            serde_json::from_str(json).map_err(|e| Error::Manifest(e.to_string()))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported manifest version {}",
                manifest.version
            )));
        }
        if manifest.t != manifest.covers.len() {
            return Err(Error::Manifest(format!(
                "T = {} but {} covers listed",
                manifest.t,
                manifest.covers.len()
            )));
        }
        if manifest.covers.windows(2).any(|w| w[0].id > w[1].id) {
            return Err(Error::Manifest(
                "covers are not in ascending digest order".into(),
            ));
        }
        Self::from_entries(manifest.covers)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_manifest_json(&json)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_manifest_json() + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Hashes every file and returns the canonically ordered library.
///
/// Files are hashed in parallel; the result does not depend on the order of
/// `paths`.
pub fn build_library<P: AsRef<Path> + Sync>(paths: &[P]) -> Result<CoverLibrary> {
    if paths.len() < 2 {
        return Err(Error::LibraryTooSmall(paths.len()));
    }
    let entries = paths
        .par_iter()
        .map(|p| {
            let p = p.as_ref();
            let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
            Ok(CoverEntry {
                id: CoverId::of_bytes(&bytes),
                path: p.to_string_lossy().into_owned(),
                bytes: bytes.len() as u64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    CoverLibrary::from_entries(entries)
}

/// Expands directories (one level, regular files only) and keeps plain files.
pub fn collect_cover_files<P: AsRef<Path>>(inputs: &[P]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        let input = input.as_ref();
        let meta = fs::metadata(input).map_err(|e| Error::io(input, e))?;
        if meta.is_dir() {
            let mut found = Vec::new();
            for entry in fs::read_dir(input).map_err(|e| Error::io(input, e))? {
                let entry = entry.map_err(|e| Error::io(input, e))?;
                let path = entry.path();
                if path.is_file() {
                    found.push(path);
                }
            }
            found.sort();
            files.extend(found);
        } else {
            files.push(input.to_path_buf());
        }
    }
    Ok(files)
}

/// Reads the content of every cover listed in `library`. Relative cover
/// paths resolve against `base`, normally the manifest's directory.
pub fn read_contents(library: &CoverLibrary, base: &Path) -> Result<HashMap<CoverId, Vec<u8>>> {
    library
        .covers()
        .par_iter()
        .map(|c| {
            let path = base.join(&c.path);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let id = CoverId::of_bytes(&bytes);
            if id != c.id {
                return Err(Error::Manifest(format!(
                    "content of {} no longer matches digest {}",
                    c.path, c.id
                )));
            }
            Ok((c.id, bytes))
        })
        .collect()
}
