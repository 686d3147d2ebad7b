//! Append-only key-value log with write-ahead durability.
//!
//! Each put appends one `{"key": ..., "value": ...}` line and syncs the file
//! before the in-memory map changes, so a reader never sees a value that is
//! not on disk. On open the log is replayed; the last record for a key wins.
//! An unterminated final line is a torn write and is dropped.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Serialize, Deserialize)]
struct Entry<K, V> {
    key: K,
    value: V,
}

pub struct LogStore<V> {
    map: RwLock<HashMap<String, Arc<V>>>,
    log: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl<V: Serialize + DeserializeOwned + PartialEq> LogStore<V> {
    pub fn in_memory() -> Self {
        Self {
            map: RwLock::new(HashMap::new()),
            log: None,
            path: None,
        }
    }

    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut map = HashMap::new();
        let mut valid_len = 0u64;
        if path.exists() {
            let mut reader = BufReader::new(File::open(&path)?);
            let mut line = String::new();
            let mut line_no = 0usize;
            loop {
                line.clear();
                if reader.read_line(&mut line)? == 0 {
                    break;
                }
                line_no += 1;
                if !line.ends_with('\n') {
                    tracing::warn!(path = %path.display(), line = line_no, "dropping torn final record");
                    break;
                }
                valid_len += line.len() as u64;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: Entry<String, V> = serde_json::from_str(&line).map_err(|e| {
                    io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("{}: line {line_no}: {e}", path.display()),
                    )
                })?;
                map.insert(entry.key, Arc::new(entry.value));
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        if file.metadata()?.len() > valid_len {
            file.set_len(valid_len)?;
            file.sync_all()?;
        }
        Ok(Self {
            map: RwLock::new(map),
            log: Some(Mutex::new(file)),
            path: Some(path),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<Arc<V>> {
        self.map.read().expect("store lock").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stores `value` under `key`, replacing any previous value. Returns the
    /// stored value; an equal existing value is kept without a new record.
    pub fn put(&self, key: &str, value: V) -> io::Result<Arc<V>> {
        // The log mutex serializes writers so log order matches map order.
        let mut guard = self.log.as_ref().map(|m| m.lock().expect("log lock"));
        if let Some(existing) = self.get(key) {
            if *existing == value {
                return Ok(existing);
            }
        }
        if let Some(file) = guard.as_deref_mut() {
            let mut line = serde_json::to_string(&Entry { key, value: &value }).map_err(io::Error::other)?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.sync_data()?;
        }
        let value = Arc::new(value);
        self.map
            .write()
            .expect("store lock")
            .insert(key.to_string(), Arc::clone(&value));
        Ok(value)
    }
}
