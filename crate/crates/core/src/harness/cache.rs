//! Content-addressed artifact cache.
//!
//! Artifacts live in `<root>/<kind>/<key>/`. A directory is built under a
//! temporary name and renamed into place, so a present directory is always
//! complete and is never rebuilt.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Environment variable naming the cache root.
pub const CACHE_ENV: &str = "RECFAIR_CACHE";

static TMP_COUNTER: AtomicUsize = AtomicUsize::new(0);

/// SHA-256 over the parts, each terminated by a NUL byte.
pub fn hash_key<S: AsRef<str>>(parts: &[S]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_ref().as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone)]
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// Root from `RECFAIR_CACHE`, else `fallback`.
    pub fn from_env(fallback: impl Into<PathBuf>) -> Self {
        match std::env::var_os(CACHE_ENV) {
            Some(v) if !v.is_empty() => Self::new(PathBuf::from(v)),
            _ => Self::new(fallback),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dir(&self, kind: &str, key: &str) -> PathBuf {
        self.root.join(kind).join(key)
    }

    pub fn contains(&self, kind: &str, key: &str) -> bool {
        self.dir(kind, key).is_dir()
    }

    /// Returns the artifact directory and whether it was already present.
    /// On a miss, `build` fills a fresh directory that is then moved into
    /// place; if `build` fails the partial output is kept next to the final
    /// location with a `.partial` suffix.
    pub fn get_or_build(&self, kind: &str, key: &str, build: impl FnOnce(&Path) -> Result<()>) -> Result<(PathBuf, bool)> {
        let dest = self.dir(kind, key);
        if dest.is_dir() {
            return Ok((dest, true));
        }
        let parent = self.root.join(kind);
        fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
        let n = TMP_COUNTER.fetch_add(1, Ordering::SeqCst);
        let tmp = parent.join(format!(".tmp-{key}-{}-{n}", std::process::id()));
        fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        if let Err(e) = build(&tmp) {
            let partial = parent.join(format!("{key}.partial"));
            let _ = fs::remove_dir_all(&partial);
            let _ = fs::rename(&tmp, &partial);
            return Err(e);
        }
        match fs::rename(&tmp, &dest) {
            Ok(()) => {
                let _ = fs::remove_dir_all(parent.join(format!("{key}.partial")));
                Ok((dest, false))
            }
            // another writer finished first; keep theirs
            Err(_) if dest.is_dir() => {
                let _ = fs::remove_dir_all(&tmp);
                Ok((dest, true))
            }
            Err(e) => Err(Error::io(&dest, e)),
        }
    }
}
