//! Content-addressed result cache with atomic writes.
//!
//! Layout: `<root>/<first two hex digits>/<sha256 hex>.json`, one JSON value
//! per key. Writes go to a temporary file in the same directory and are
//! renamed into place, so an interrupted run never leaves a torn entry.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// SHA-256 of the canonical JSON encoding of `value`, hex encoded.
pub fn content_hash<K: Serialize + ?Sized>(value: &K) -> String {
    let bytes = serde_json::to_vec(value).expect("cache keys serialise");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Clone, Debug)]
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, hash: &str) -> PathBuf {
        self.root.join(&hash[..2]).join(format!("{hash}.json"))
    }

    pub fn get<K: Serialize + ?Sized, V: DeserializeOwned>(&self, key: &K) -> Option<V> {
        let path = self.path_for(&content_hash(key));
        let text = std::fs::read_to_string(path).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn put<K: Serialize + ?Sized, V: Serialize>(&self, key: &K, value: &V) -> Result<()> {
        let path = self.path_for(&content_hash(key));
        let dir = path.parent().expect("entry has a parent directory");
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
        serde_json::to_writer(&mut tmp, value)?;
        tmp.flush().map_err(|e| Error::io(&path, e))?;
        tmp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
        Ok(())
    }

    /// Returns the cached value for `key`, computing and storing it on a miss.
    pub fn get_or_compute<K, V, F>(&self, key: &K, compute: F) -> Result<(V, bool)>
    where
        K: Serialize + ?Sized,
        V: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<V>,
    {
        if let Some(v) = self.get(key) {
            return Ok((v, true));
        }
        let v = compute()?;
        self.put(key, &v)?;
        Ok((v, false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_key_sensitive() {
        let a = content_hash(&("grid", 9, 0.05));
        assert_eq!(a, content_hash(&("grid", 9, 0.05)));
        assert_ne!(a, content_hash(&("grid", 9, 0.06)));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn round_trip_and_hit_flag() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path()).unwrap();
        let key = ("cell", 1.5f64);
        let (v, hit): (f64, bool) = cache.get_or_compute(&key, || Ok(0.25)).unwrap();
        assert_eq!((v, hit), (0.25, false));
        let (v, hit): (f64, bool) = cache.get_or_compute(&key, || panic!("recomputed")).unwrap();
        assert_eq!((v, hit), (0.25, true));
        assert!(cache.path_for(&content_hash(&key)).exists());
    }
}
