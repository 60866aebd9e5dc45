//! Feedback file shared between scan rounds.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, ErrorKind};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{RoundResult, TargetProfile};
use crate::WeightVector;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_FEEDBACK_FILE: &str = "feedback.json";
/// Overrides the default feedback path.
pub const FEEDBACK_ENV: &str = "TPSQLI_FEEDBACK";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("feedback file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("feedback file {path} is corrupt at byte {offset}: {message}")]
    Corrupt {
        path: PathBuf,
        offset: usize,
        message: String,
    },
    #[error("feedback file {path} has schema version {found}; this build supports up to {SCHEMA_VERSION}")]
    UnsupportedVersion { path: PathBuf, found: String },
}

/// Summary of one round, appended to the store history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundDigest {
    pub trials: usize,
    pub exploited: usize,
    pub order: String,
    pub sw_vector: WeightVector,
}

impl RoundDigest {
    pub fn of(result: &RoundResult) -> Self {
        RoundDigest {
            trials: result.trials.len(),
            exploited: result.vulnerabilities.len(),
            order: result.order_letters(),
            sw_vector: result.updated_profile.sw_vector.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub target_id: String,
    pub digest: RoundDigest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackStore {
    pub version: String,
    #[serde(default)]
    pub profiles: BTreeMap<String, TargetProfile>,
    #[serde(default)]
    pub history: Vec<HistoryEntry>,
    /// Fields written by newer builds, kept verbatim.
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl Default for FeedbackStore {
    fn default() -> Self {
        FeedbackStore {
            version: SCHEMA_VERSION.to_string(),
            profiles: BTreeMap::new(),
            history: Vec::new(),
            extra: serde_json::Map::new(),
        }
    }
}

impl FeedbackStore {
    pub fn profile(&self, target_id: &str) -> Option<&TargetProfile> {
        self.profiles.get(target_id)
    }

    /// Stores the round's profile and appends a history entry.
    pub fn record_round(&mut self, result: &RoundResult) {
        let profile = &result.updated_profile;
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        self.history.push(HistoryEntry {
            timestamp,
            target_id: profile.target_id.clone(),
            digest: RoundDigest::of(result),
        });
        self.profiles.insert(profile.target_id.clone(), profile.clone());
    }

    /// Canonical serialization: pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("store serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self, StoreError> {
        let store: FeedbackStore = serde_json::from_str(text).map_err(|e| StoreError::Corrupt {
            path: path.to_path_buf(),
            offset: byte_offset(text, e.line(), e.column()),
            message: e.to_string(),
        })?;
        match store.version.trim().parse::<u32>() {
            Ok(v) if v <= SCHEMA_VERSION => Ok(store),
            _ => Err(StoreError::UnsupportedVersion {
                path: path.to_path_buf(),
                found: store.version,
            }),
        }
    }
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

/// Feedback path from the flag, then `TPSQLI_FEEDBACK`, then the default.
pub fn feedback_path(flag: Option<&Path>) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(FEEDBACK_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_FEEDBACK_FILE)),
    }
}

/// A missing file yields an empty store.
pub fn load_feedback(path: &Path) -> Result<FeedbackStore, StoreError> {
    match std::fs::read_to_string(path) {
        Ok(text) => FeedbackStore::from_json(&text, path),
        Err(e) if e.kind() == ErrorKind::NotFound => Ok(FeedbackStore::default()),
        Err(source) => Err(StoreError::Io {
            path: path.to_path_buf(),
            source,
        }),
    }
}

/// Writes atomically through a sibling temp file.
pub fn save_feedback(store: &FeedbackStore, path: &Path) -> Result<(), StoreError> {
    let io_err = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let tmp = sibling(path, ".tmp");
    std::fs::write(&tmp, store.to_json()).map_err(io_err)?;
    std::fs::rename(&tmp, path).map_err(io_err)
}

/// Exclusive advisory lock on `<feedback>.lock`, held until dropped.
/// Take it around a load/modify/save cycle.
#[derive(Debug)]
pub struct FeedbackLock {
    file: File,
    path: PathBuf,
}

impl FeedbackLock {
    pub fn acquire(feedback: &Path) -> Result<FeedbackLock, StoreError> {
        let path = sibling(feedback, ".lock");
        let io_err = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(io_err)?;
        file.lock().map_err(io_err)?;
        Ok(FeedbackLock { file, path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Drop for FeedbackLock {
    fn drop(&mut self) {
        let _ = self.file.unlock();
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}
