//! On-disk store of extracted rule files, keyed by a hash of the app source
//! and the catalog it was extracted against.

use std::io::Write;
use std::path::{Path, PathBuf};

use cai_core::rules::{self, RuleSet};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone)]
pub struct RuleCache {
    dir: PathBuf,
}

impl RuleCache {
    pub fn new(dir: impl Into<PathBuf>) -> RuleCache {
        RuleCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(source: &str, catalog_json: &str) -> String {
        let mut h = Sha256::new();
        h.update((source.len() as u64).to_le_bytes());
        h.update(source.as_bytes());
        h.update(catalog_json.as_bytes());
        hex::encode(&h.finalize()[..16])
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.rules.json"))
    }

    /// A cached rule set, or `None` on a miss or an unreadable entry.
    pub fn get(&self, key: &str) -> Option<RuleSet> {
        let bytes = std::fs::read(self.path(key)).ok()?;
        rules::deserialize(&bytes).ok()
    }

    /// Best effort: a failed write only costs a later re-extraction.
    pub fn put(&self, key: &str, rules: &RuleSet) {
        let write = || -> std::io::Result<()> {
            std::fs::create_dir_all(&self.dir)?;
            let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
            tmp.write_all(rules::serialize(rules).as_bytes())?;
            tmp.persist(self.path(key)).map_err(|e| e.error)?;
            Ok(())
        };
        if let Err(e) = write() {
            eprintln!("warning: rule cache write failed: {e}");
        }
    }
}
