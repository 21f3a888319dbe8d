//! Append-only completion cache and its replay view.
//!
//! The cache file is line-delimited JSON, one record per completion. Records
//! are immutable once written; replaying a recorded session returns the
//! stored texts byte for byte.

use super::{GateError, GateRequest};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

/// One cached completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: String,
    pub raw_text: String,
    pub created_at: u64,
    pub model_id: String,
    pub temperature: f64,
}

impl CacheRecord {
    pub fn for_request(request: &GateRequest, raw_text: &str) -> CacheRecord {
        CacheRecord {
            key: request.cache_key(),
            raw_text: raw_text.to_string(),
            created_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            model_id: request.model_id.clone(),
            temperature: request.temperature,
        }
    }
}

/// Writer side: appends are serialized through a single writer.
#[derive(Debug)]
pub struct CompletionCache {
    path: PathBuf,
    writer: Mutex<BufWriter<File>>,
}

impl CompletionCache {
    pub fn open_append(path: &Path) -> Result<CompletionCache, GateError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(GateError::Cache)?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(GateError::Cache)?;
        Ok(CompletionCache {
            path: path.to_path_buf(),
            writer: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &CacheRecord) -> Result<(), GateError> {
        let line = serde_json::to_string(record).expect("cache records serialize");
        let mut writer = self.writer.lock().expect("cache writer poisoned");
        writeln!(writer, "{line}").map_err(GateError::Cache)?;
        writer.flush().map_err(GateError::Cache)
    }
}

/// Read side: the cache loaded into memory for replay lookups.
#[derive(Debug, Clone, Default)]
pub struct ReplayStore {
    records: HashMap<String, String>,
}

impl ReplayStore {
    pub fn load(path: &Path) -> Result<ReplayStore, GateError> {
        let file = File::open(path).map_err(GateError::Cache)?;
        let mut records = HashMap::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(GateError::Cache)?;
            if line.trim().is_empty() {
                continue;
            }
            let record: CacheRecord = serde_json::from_str(&line)
                .map_err(|e| GateError::Cache(std::io::Error::other(e)))?;
            // later records win; keys are content hashes so texts only differ
            // when a live model was re-queried for the same request
            records.insert(record.key, record.raw_text);
        }
        Ok(ReplayStore { records })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.records.get(key).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
