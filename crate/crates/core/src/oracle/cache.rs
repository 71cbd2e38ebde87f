use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{Direction, GridSpec, PatchSet};

/// What was shown to the classifier, relative to one image and baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Probe {
    /// A patch subset of a rows x cols grid.
    Patches { rows: u8, cols: u8, bits: u64 },
    /// The top `kept` pixels of an attribution ranking.
    Ranked { map: u64, kept: u32, direction: Direction },
}

impl Probe {
    pub fn patches(grid: &GridSpec, set: PatchSet) -> Self {
        Probe::Patches {
            rows: grid.rows() as u8,
            cols: grid.cols() as u8,
            bits: set.bits(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey {
    pub image: u64,
    pub baseline: u64,
    pub probe: Probe,
    pub class: u32,
}

#[derive(Serialize, Deserialize)]
struct Line {
    #[serde(flatten)]
    key: CacheKey,
    confidence: f64,
}

/// Confidences already obtained from one classifier.
///
/// Keep one cache per classifier: keys do not name the model.
#[derive(Debug, Default)]
pub struct ConfidenceCache {
    entries: RwLock<HashMap<CacheKey, f64>>,
    disabled: bool,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl ConfidenceCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// A cache that never stores anything.
    pub fn disabled() -> Self {
        Self {
            disabled: true,
            ..Self::default()
        }
    }

    pub fn get(&self, key: &CacheKey) -> Option<f64> {
        let found = self.entries.read().expect("cache poisoned").get(key).copied();
        let counter = if found.is_some() { &self.hits } else { &self.misses };
        counter.fetch_add(1, Ordering::Relaxed);
        found
    }

    /// Stores `value` unless another writer got there first; returns the stored value.
    pub fn insert(&self, key: CacheKey, value: f64) -> f64 {
        if self.disabled {
            return value;
        }
        *self.entries.write().expect("cache poisoned").entry(key).or_insert(value)
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    /// Drops every entry for one image digest.
    pub fn evict_image(&self, image: u64) -> usize {
        let mut entries = self.entries.write().expect("cache poisoned");
        let before = entries.len();
        entries.retain(|k, _| k.image != image);
        before - entries.len()
    }

    /// Merges entries from a JSONL file; a missing file is not an error.
    pub fn load_jsonl(&self, path: &Path) -> Result<usize> {
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(0),
            Err(e) => return Err(e.into()),
        };
        let mut loaded = 0;
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })?;
            self.insert(parsed.key, parsed.confidence);
            loaded += 1;
        }
        Ok(loaded)
    }

    /// Writes all entries, sorted by key, one JSON object per line.
    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let entries = self.entries.read().expect("cache poisoned");
        let mut sorted: Vec<_> = entries.iter().map(|(k, v)| (*k, *v)).collect();
        sorted.sort_by(|a, b| a.0.cmp(&b.0));
        let dir = path.parent().unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir)?;
        let tmp = path.with_extension("jsonl.tmp");
        {
            let mut out = BufWriter::new(File::create(&tmp)?);
            for (key, confidence) in sorted {
                serde_json::to_writer(&mut out, &Line { key, confidence })?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}
