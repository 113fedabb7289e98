//! On-disk cache of raw tool outputs.
//!
//! Entries are keyed by a SHA-256 digest of the repository path and the full
//! argument list. Only invocations whose arguments pin immutable objects
//! (full commit ids) should be cached. Writers go through a temporary file
//! and an atomic rename, so concurrent readers never observe a partial entry.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct OutputCache {
    dir: Option<PathBuf>,
}

impl OutputCache {
    pub fn disabled() -> Self {
        OutputCache { dir: None }
    }

    pub fn at(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(OutputCache { dir: Some(dir) })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn key<S: AsRef<str>>(parts: &[S]) -> String {
        let mut h = Sha256::new();
        for p in parts {
            h.update(p.as_ref().as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }

    fn path_for(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(&key[..2]).join(key))
    }

    pub fn get(&self, key: &str) -> Option<Vec<u8>> {
        self.path_for(key).and_then(|p| fs::read(p).ok())
    }

    pub fn put(&self, key: &str, value: &[u8]) -> Result<()> {
        let Some(path) = self.path_for(key) else {
            return Ok(());
        };
        let parent = path
            .parent()
            .expect("cache entries live in a shard directory");
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| Error::io(parent, e))?;
        tmp.write_all(value).map_err(|e| Error::io(&path, e))?;
        tmp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
        Ok(())
    }

    pub fn get_or_insert_with(
        &self,
        key: &str,
        produce: impl FnOnce() -> Result<Vec<u8>>,
    ) -> Result<Vec<u8>> {
        if let Some(hit) = self.get(key) {
            return Ok(hit);
        }
        let value = produce()?;
        self.put(key, &value)?;
        Ok(value)
    }
}
