//! Append-only verdict cache keyed by content hash.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub hash: String,
    pub verdict: u8,
    pub raw_reply: Option<String>,
}

/// Hash of the prompt template, judge identity and compared texts.
pub fn content_hash(parts: &[&str]) -> String {
    let encoded = serde_json::to_string(parts).expect("strings serialize");
    hex::encode(Sha256::digest(encoded.as_bytes()))
}

struct Inner {
    map: HashMap<String, CacheEntry>,
    file: Option<File>,
}

pub struct VerdictCache {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl VerdictCache {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            inner: Mutex::new(Inner {
                map: HashMap::new(),
                file: None,
            }),
        }
    }

    /// Loads existing entries and opens the file for appending. A torn
    /// final line (interrupted write) is skipped.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut map = HashMap::new();
        if path.exists() {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            for line in BufReader::new(f).lines() {
                let line = line.map_err(|e| Error::io(path, e))?;
                match serde_json::from_str::<CacheEntry>(&line) {
                    Ok(entry) => {
                        map.insert(entry.hash.clone(), entry);
                    }
                    Err(e) => log::warn!("{}: skipping unreadable cache line: {e}", path.display()),
                }
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let torn = std::fs::read(path)
            .map(|b| b.last().is_some_and(|&c| c != b'\n'))
            .unwrap_or(false);
        if torn {
            file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        Ok(Self {
            path: Some(path.to_path_buf()),
            inner: Mutex::new(Inner {
                map,
                file: Some(file),
            }),
        })
    }

    pub fn get(&self, hash: &str) -> Option<CacheEntry> {
        self.inner.lock().unwrap().map.get(hash).cloned()
    }

    pub fn insert(&self, entry: CacheEntry) -> Result<()> {
        let mut inner = self.inner.lock().unwrap();
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_string(&entry).expect("entry serializes");
            line.push('\n');
            let path = self.path.clone().unwrap_or_default();
            file.write_all(line.as_bytes()).map_err(|e| Error::io(&path, e))?;
            file.flush().map_err(|e| Error::io(&path, e))?;
        }
        inner.map.insert(entry.hash.clone(), entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
