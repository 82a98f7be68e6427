use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// On-disk store of raw API response bodies, keyed by a hash of the
/// canonical request. Writes go to a temporary file in the cache directory
/// and are renamed into place, so readers never observe partial entries.
#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating cache dir {}", dir.display()), e))?;
        Ok(Cache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Canonical key: endpoint plus query pairs sorted by name.
    pub fn key(endpoint: &str, query: &[(String, String)]) -> String {
        let mut pairs: Vec<_> = query.iter().collect();
        pairs.sort();
        let mut canonical = String::from(endpoint);
        for (k, v) in pairs {
            canonical.push('\n');
            canonical.push_str(k);
            canonical.push('=');
            canonical.push_str(v);
        }
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn read(&self, key: &str) -> Result<Option<Vec<u8>>> {
        match fs::read(self.path(key)) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(format!("reading cache entry {key}"), e)),
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.path(key).is_file()
    }

    pub fn write(&self, key: &str, body: &[u8]) -> Result<()> {
        let ctx = || format!("writing cache entry {key}");
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| Error::io(ctx(), e))?;
        tmp.write_all(body).map_err(|e| Error::io(ctx(), e))?;
        tmp.as_file().sync_all().map_err(|e| Error::io(ctx(), e))?;
        tmp.persist(self.path(key)).map_err(|e| Error::io(ctx(), e.error))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_ignores_query_order() {
        let a = vec![
            ("lat".to_string(), "1".to_string()),
            ("lon".to_string(), "2".to_string()),
        ];
        let b = vec![
            ("lon".to_string(), "2".to_string()),
            ("lat".to_string(), "1".to_string()),
        ];
        assert_eq!(Cache::key("x", &a), Cache::key("x", &b));
        assert_ne!(Cache::key("x", &a), Cache::key("y", &a));
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path()).unwrap();
        assert_eq!(cache.read("k").unwrap(), None);
        cache.write("k", b"{\"a\":1}").unwrap();
        assert_eq!(cache.read("k").unwrap().unwrap(), b"{\"a\":1}");
        // no stray temporaries left behind
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
