//! Per-URL page action memory with an on-disk cache.
//!
//! Each visited URL gets one [`PageMemory`] record holding the objective,
//! a progress summary, the reason–action history, a compressed snapshot and
//! the action memory. Records are written through to `<dir>/<sha256(url)>.mem`
//! after every cycle when a cache directory is configured.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::action::{action_signature, Action};
use crate::env::PageView;
use crate::reasoner::{truncate_chars, Evaluation};

pub const MEMORY_SCHEMA_VERSION: u32 = 1;
pub const PROGRESS_SUMMARY_LIMIT: usize = 2000;
pub const SNAPSHOT_TEXT_LIMIT: usize = 1000;
/// Scores at or above this mark an action relevant.
pub const RELEVANT_SCORE: f64 = 0.5;

const CACHE_EXTENSION: &str = "mem";

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("cache io error at {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("corrupt cache file {path}: {reason}")]
    CacheCorrupt { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Objective {
    pub global_intent: String,
    pub active_subtask: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub action_id: u64,
    pub name: String,
    #[serde(rename = "ref")]
    pub element: String,
    pub result: String,
    #[serde(default)]
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Snapshot {
    pub url: String,
    pub title: String,
    pub dom_text: String,
    /// Opaque screenshot reference. Never decoded.
    pub image_ref: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relevance {
    Relevant,
    Irrelevant,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionEntry {
    pub signature: String,
    pub relevance: Relevance,
    pub success: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageMemory {
    pub version: u32,
    pub url: String,
    pub objective: Objective,
    pub progress_summary: String,
    pub history: Vec<CycleRecord>,
    pub snapshot: Snapshot,
    pub action_memory: Vec<ActionEntry>,
}

impl PageMemory {
    pub fn new(url: &str) -> Self {
        Self {
            version: MEMORY_SCHEMA_VERSION,
            url: url.to_string(),
            objective: Objective::default(),
            progress_summary: String::new(),
            history: Vec::new(),
            snapshot: Snapshot::default(),
            action_memory: Vec::new(),
        }
    }

    pub fn entry(&self, signature: &str) -> Option<&ActionEntry> {
        self.action_memory.iter().find(|e| e.signature == signature)
    }

    pub fn irrelevant_signatures(&self) -> BTreeSet<String> {
        self.action_memory
            .iter()
            .filter(|e| e.relevance == Relevance::Irrelevant)
            .map(|e| e.signature.clone())
            .collect()
    }
}

/// Compact projection of a record, used as decomposition context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageSummary {
    pub url: String,
    pub title: String,
    pub progress_summary: String,
    pub visited_actions: Vec<String>,
}

/// One cycle's worth of input to [`MemoryStore::record_cycle`].
#[derive(Debug, Clone)]
pub struct CycleInput<'a> {
    /// The page the action was taken on.
    pub page: &'a PageView,
    pub objective: Objective,
    pub reason: &'a str,
    pub action: &'a Action,
    pub result: &'a str,
    pub success: bool,
    pub eval: &'a Evaluation,
    pub epsilon: f64,
}

pub fn classify(eval: &Evaluation, epsilon: f64) -> Relevance {
    if eval.subtask_done {
        Relevance::Relevant
    } else if eval.score < epsilon {
        Relevance::Irrelevant
    } else if eval.score >= RELEVANT_SCORE {
        Relevance::Relevant
    } else {
        Relevance::Unknown
    }
}

fn compress_text(s: &str) -> String {
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ");
    truncate_chars(&collapsed, SNAPSHOT_TEXT_LIMIT)
}

pub fn url_digest(url: &str) -> String {
    hex::encode(Sha256::digest(url.as_bytes()))
}

fn cache_path(dir: &Path, url: &str) -> PathBuf {
    dir.join(format!("{}.{CACHE_EXTENSION}", url_digest(url)))
}

fn encode(record: &PageMemory) -> String {
    let mut text = serde_json::to_string_pretty(record).expect("records serialize");
    text.push('\n');
    text
}

fn decode(path: &Path, text: &str) -> Result<PageMemory, MemoryError> {
    let corrupt = |reason: String| MemoryError::CacheCorrupt { path: path.display().to_string(), reason };
    let record: PageMemory = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
    if record.version != MEMORY_SCHEMA_VERSION {
        return Err(corrupt(format!("schema version {} (expected {MEMORY_SCHEMA_VERSION})", record.version)));
    }
    if path.file_stem().and_then(|s| s.to_str()) != Some(url_digest(&record.url).as_str()) {
        return Err(corrupt("file name does not match the record url".into()));
    }
    Ok(record)
}

#[derive(Debug, Clone, Default)]
pub struct MemoryStore {
    records: BTreeMap<String, PageMemory>,
    cache_dir: Option<PathBuf>,
    warnings: Vec<String>,
}

impl PartialEq for MemoryStore {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
    }
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// A store that writes through to, and lazily reads from, `dir`.
    pub fn with_cache_dir(dir: impl Into<PathBuf>) -> Result<Self, MemoryError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| MemoryError::Io { path: dir.display().to_string(), source })?;
        Ok(Self { cache_dir: Some(dir), ..Self::default() })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &PageMemory> {
        self.records.values()
    }

    pub fn insert(&mut self, record: PageMemory) {
        self.records.insert(record.url.clone(), record);
    }

    pub fn get(&self, url: &str) -> Option<&PageMemory> {
        self.records.get(url)
    }

    /// Warnings about skipped cache files, in the order they were hit.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn take_warnings(&mut self) -> Vec<String> {
        std::mem::take(&mut self.warnings)
    }

    /// Appends a cycle record and upserts the action's memory entry.
    pub fn record_cycle(&mut self, input: CycleInput<'_>) -> Result<&PageMemory, MemoryError> {
        let url = input.page.url.clone();
        self.load_for_url(&url);
        let record = self.records.entry(url.clone()).or_insert_with(|| PageMemory::new(&url));

        let action_id = record.history.last().map_or(0, |r| r.action_id + 1);
        record.history.push(CycleRecord {
            action_id,
            name: input.action.variant_name().to_string(),
            element: input.action.element().map(ToString::to_string).unwrap_or_default(),
            result: input.result.to_string(),
            reason: input.reason.to_string(),
        });

        let signature = action_signature(input.action);
        let entry = ActionEntry {
            signature: signature.clone(),
            relevance: classify(input.eval, input.epsilon),
            success: input.success,
            note: format!("score {:.3}: {}", input.eval.score, input.result),
        };
        match record.action_memory.iter_mut().find(|e| e.signature == signature) {
            Some(existing) => *existing = entry,
            None => record.action_memory.push(entry),
        }

        record.objective = input.objective;
        record.progress_summary = truncate_chars(&input.eval.rationale, PROGRESS_SUMMARY_LIMIT);
        record.snapshot = Snapshot {
            url: input.page.url.clone(),
            title: input.page.title.clone(),
            dom_text: compress_text(&input.page.dom_text),
            image_ref: format!("screenshot:{}", &input.page.state_digest.0[..16.min(input.page.state_digest.0.len())]),
        };

        if let Some(dir) = &self.cache_dir {
            let path = cache_path(dir, &url);
            fs::write(&path, encode(record))
                .map_err(|source| MemoryError::Io { path: path.display().to_string(), source })?;
        }
        Ok(&self.records[&url])
    }

    /// Returns the record for `url` from memory, falling back to the cache
    /// directory. A corrupt cache file counts as absent and adds a warning.
    pub fn load_for_url(&mut self, url: &str) -> Option<&PageMemory> {
        if !self.records.contains_key(url) {
            let dir = self.cache_dir.clone()?;
            let path = cache_path(&dir, url);
            let text = fs::read_to_string(&path).ok()?;
            match decode(&path, &text) {
                Ok(record) => {
                    self.records.insert(url.to_string(), record);
                }
                Err(e) => {
                    log::warn!("{e}");
                    self.warnings.push(e.to_string());
                    return None;
                }
            }
        }
        self.records.get(url)
    }

    pub fn irrelevant_signatures(&mut self, url: &str) -> BTreeSet<String> {
        self.load_for_url(url).map(PageMemory::irrelevant_signatures).unwrap_or_default()
    }

    /// Writes one document per URL into `dir`.
    pub fn persist(&self, dir: &Path) -> Result<(), MemoryError> {
        fs::create_dir_all(dir).map_err(|source| MemoryError::Io { path: dir.display().to_string(), source })?;
        for record in self.records.values() {
            let path = cache_path(dir, &record.url);
            fs::write(&path, encode(record))
                .map_err(|source| MemoryError::Io { path: path.display().to_string(), source })?;
        }
        Ok(())
    }

    /// Reads every `.mem` document in `dir`. Corrupt files are skipped and
    /// reported through [`MemoryStore::warnings`].
    pub fn restore(dir: &Path) -> Result<Self, MemoryError> {
        let io = |source| MemoryError::Io { path: dir.display().to_string(), source };
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().and_then(|e| e.to_str()) == Some(CACHE_EXTENSION))
            .collect();
        paths.sort();
        let mut store = Self::new();
        for path in paths {
            let parsed = fs::read_to_string(&path)
                .map_err(|e| MemoryError::CacheCorrupt { path: path.display().to_string(), reason: e.to_string() })
                .and_then(|text| decode(&path, &text));
            match parsed {
                Ok(record) => store.insert(record),
                Err(e) => {
                    log::warn!("{e}");
                    store.warnings.push(e.to_string());
                }
            }
        }
        Ok(store)
    }

    /// Read-only projection for re-decomposition: no raw history or snapshots.
    pub fn summaries_for_decomposition(&self) -> Vec<PageSummary> {
        self.records
            .values()
            .map(|r| {
                let mut visited: Vec<String> = Vec::new();
                for h in &r.history {
                    if !visited.contains(&h.name) {
                        visited.push(h.name.clone());
                    }
                }
                PageSummary {
                    url: r.url.clone(),
                    title: r.snapshot.title.clone(),
                    progress_summary: r.progress_summary.clone(),
                    visited_actions: visited,
                }
            })
            .collect()
    }
}
